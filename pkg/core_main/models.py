from django.db import models


class PipelineRun(models.Model):
    """
    One invocation of the pipeline orchestrator

    Model Fields:
        - config_hash: sha256 of the canonical config echo
        - config: full validated config echo
        - seed: global seed used by the run
        - stages: requested stage names, in execution order
        - status: running / succeeded / failed
        - started_at, finished_at: wall-clock bookkeeping (not part of any artifact)
    """

    STATUS_CHOICES = (
        ('running', 'Running'),
        ('succeeded', 'Succeeded'),
        ('failed', 'Failed'),
    )

    # Provenance
    config_hash = models.CharField(max_length=64, db_index=True)
    config = models.JSONField()
    seed = models.BigIntegerField()
    stages = models.JSONField(default=list)

    # Tracking fields
    status = models.CharField(choices=STATUS_CHOICES, max_length=10, default='running')
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f"Run {self.pk} [{self.status}] config {self.config_hash[:12]}"


class StageRun(models.Model):
    """
    Outcome of a single stage inside a pipeline run

    Model Fields:
        - run: Foreign key to PipelineRun
        - stage: stage name (synth, train_ae, extract, ...)
        - status: succeeded / failed
        - artifact_path: artifact produced by the stage
        - artifact_sha256: checksum of the artifact (file or directory tree)
        - message: diagnostic when the stage failed
    """

    STATUS_CHOICES = (
        ('succeeded', 'Succeeded'),
        ('failed', 'Failed'),
    )

    run = models.ForeignKey(PipelineRun, on_delete=models.CASCADE, related_name='stage_runs')
    stage = models.CharField(max_length=32)
    status = models.CharField(choices=STATUS_CHOICES, max_length=10)
    artifact_path = models.CharField(max_length=1024, blank=True)
    artifact_sha256 = models.CharField(max_length=64, blank=True)
    message = models.TextField(blank=True)

    class Meta:
        ordering = ['id']

    def __str__(self):
        return f"{self.stage} [{self.status}] of run {self.run_id}"
