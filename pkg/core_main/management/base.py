import logging

from django.core.management.base import BaseCommand, CommandError

from core_main.exceptions import PipelineError, StageFailedError
from core_main.services import PipelineServices

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """
    Base for stage commands: shared `--config/--seed/--out` flags and
    translation of pipeline errors into a CommandError naming the stage
    """

    stage = None

    def add_arguments(self, parser):
        parser.add_argument('--config', help="pipeline YAML file (default: settings.DEFAULT_PIPELINE_CONFIG)")
        parser.add_argument('--seed', type=int, help="override every seed in the config")
        parser.add_argument('--out', help="output path (default: taken from the config paths)")
        self.add_stage_arguments(parser)

    def add_stage_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            config = PipelineServices.load_config(options['config'], seed=options['seed'])
            result = self.run_stage(config, options)
        except PipelineError as exc:
            logger.error("%s failed: %s", self.stage, exc)
            message = str(exc) if isinstance(exc, StageFailedError) else f"{self.stage}: {exc}"
            raise CommandError(message) from exc
        self.report(result, options)

    def run_stage(self, config, options):
        raise NotImplementedError

    def report(self, result, options):
        for path in result or ():
            self.stdout.write(self.style.SUCCESS(f"{self.stage}: wrote {path}"))
