from core_main.domain import DEFAULT_STAGES, STAGES
from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices


class Command(PipelineCommand):
    help = "Run pipeline stages in order, recording the run and writing run_manifest.json"
    stage = 'run_pipeline'

    def add_stage_arguments(self, parser):
        parser.add_argument('--stages', nargs='+', choices=STAGES, default=list(DEFAULT_STAGES),
                            help="stages to run (always executed in pipeline order)")

    def run_stage(self, config, options):
        if options['out']:
            config = PipelineServices.with_outputs(config, options['out'])
        run = PipelineServices.run_pipeline(config, options['stages'])
        return [stage_run.artifact_path for stage_run in run.stage_runs.all()]
