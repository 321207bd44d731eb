from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices


class Command(PipelineCommand):
    help = "Extract the 22-entry object descriptors of every detection into a feature table"
    stage = 'extract'

    def add_stage_arguments(self, parser):
        parser.add_argument('--dataset', help="dataset directory")
        parser.add_argument('--bundles', help="bundle root holding appearance/ and temporal/")

    def run_stage(self, config, options):
        return PipelineServices.extract(
            config, dataset=options['dataset'], bundles=options['bundles'], out=options['out']
        )
