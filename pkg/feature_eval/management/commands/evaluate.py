from core_main.management.base import PipelineCommand
from core_main.services import PipelineServices


class Command(PipelineCommand):
    help = "Frame-level ROC/AUC of a scores table"
    stage = 'evaluate'

    def add_stage_arguments(self, parser):
        parser.add_argument('--scores', help="scores CSV (video,frame,score,verdict)")
        parser.add_argument('--labels', help="frame labels: video,frame,label or one video's frame,label")
        parser.add_argument('--video', help="video id a frame,label file belongs to")
        parser.add_argument('--dataset', help="take frame labels from the dataset's test videos")

    def run_stage(self, config, options):
        paths, summary = PipelineServices.evaluate(
            config, scores=options['scores'], labels=options['labels'], dataset=options['dataset'],
            out=options['out'], video_id=options['video'],
        )
        self.stdout.write(
            f"AUC {summary['auc']:.6f} over {summary['frames']} frames "
            f"(verdict TPR {summary['verdict_tpr']:.3f}, FPR {summary['verdict_fpr']:.3f})"
        )
        return paths
