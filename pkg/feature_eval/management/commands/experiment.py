from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices
from feature_eval.domain import EXPERIMENTS


class Command(PipelineCommand):
    help = "Run a scripted experiment and write report.csv, curves.csv and SVG charts"
    stage = 'experiment'

    def add_stage_arguments(self, parser):
        parser.add_argument('--name', required=True, choices=EXPERIMENTS)
        parser.add_argument('--features', help="feature table CSV (dataset source only)")
        parser.add_argument('--dataset', help="dataset directory (dataset source only)")

    def run_stage(self, config, options):
        return PipelineServices.experiment(
            config, options['name'], out=options['out'], features=options['features'], dataset=options['dataset']
        )
