from dataclasses import replace

from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices
from core_main.validation import build_from
from feature_inference.serializers import InferenceConfigSerializer


class Command(PipelineCommand):
    help = "Fit the cluster classifier ensemble and write the inference bundle"
    stage = 'train_infer'

    def add_stage_arguments(self, parser):
        parser.add_argument('--features', help="feature table CSV")
        parser.add_argument('--labels', help="object label table CSV")
        parser.add_argument('--k1', type=int, help="normal clusters")
        parser.add_argument('--k2', type=int, help="anomalous clusters (0 trains the normal-only baseline)")
        parser.add_argument('--mu', type=float, help="normal threshold")
        parser.add_argument('--eta', type=float, help="anomalous threshold")

    def run_stage(self, config, options):
        overrides = {name: options[name] for name in ('k1', 'k2', 'mu', 'eta') if options[name] is not None}
        if overrides:
            # re-validate so flag values obey the same bounds as the config file
            echo = {**config.echo['inference'], **overrides}
            config = replace(config, inference=build_from(InferenceConfigSerializer, echo, 'inference'))
        return PipelineServices.train_infer(
            config, features=options['features'], labels=options['labels'], out=options['out']
        )
