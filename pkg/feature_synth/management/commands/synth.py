from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices


class Command(PipelineCommand):
    help = "Render the synthetic dataset described by the config's synth section"
    stage = 'synth'

    def run_stage(self, config, options):
        return PipelineServices.synth(config, out=options['out'])
