from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices


class Command(PipelineCommand):
    help = "Score frames with a trained inference bundle"
    stage = 'score'

    def add_stage_arguments(self, parser):
        parser.add_argument('--bundle', help="inference bundle directory")
        parser.add_argument('--features', help="feature table CSV")
        parser.add_argument(
            '--dataset',
            help="dataset whose frames are all listed (frames without objects score 0); "
                 "without one only frames holding objects are scored",
        )

    def run_stage(self, config, options):
        return PipelineServices.score(
            config, bundle=options['bundle'], features=options['features'], dataset=options['dataset'],
            out=options['out'],
        )
