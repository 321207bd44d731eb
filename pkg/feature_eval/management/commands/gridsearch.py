from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices


class Command(PipelineCommand):
    help = "Sweep K1/K2/N/mu/eta over the extracted features and select the best cell"
    stage = 'gridsearch'

    def add_stage_arguments(self, parser):
        parser.add_argument('--features', help="feature table CSV")
        parser.add_argument('--dataset', help="dataset directory (object labels and test annotations)")

    def run_stage(self, config, options):
        return PipelineServices.gridsearch(
            config, features=options['features'], dataset=options['dataset'], out=options['out']
        )
