from core_main.management.base import PipelineCommand
from core_main.services import AUTOENCODER_ROLES, PipelineServices


class Command(PipelineCommand):
    help = "Train the appearance and temporal autoencoders on normal training objects"
    stage = 'train_ae'

    def add_stage_arguments(self, parser):
        parser.add_argument('--role', choices=AUTOENCODER_ROLES, action='append',
                            help="train only this role (repeatable; default: both)")
        parser.add_argument('--dataset', help="dataset directory")

    def run_stage(self, config, options):
        return PipelineServices.train_ae(
            config, roles=options['role'] or AUTOENCODER_ROLES, dataset=options['dataset'], out=options['out']
        )
