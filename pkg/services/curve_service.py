import logging
import os

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from utils.errors import SchemaError, ValidationError  # noqa: E402

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ['l_sup_1', 'l_sup_2', 'l_unsup', 'l_cog', 'l_mix', 'l_total']
REQUIRED_COLUMNS = ['iteration'] + LOSS_COLUMNS + ['lambda_u']
FORMATS = ('svg', 'png')


class CurveService:
    """Static loss and warm-up curves from a training trace"""

    def load_trace(self, trace_path: str) -> pd.DataFrame:
        if not os.path.isfile(trace_path):
            raise ValidationError(f"Trace not found: {trace_path}")
        try:
            frame = pd.read_csv(trace_path)
        except pd.errors.EmptyDataError as e:
            raise SchemaError(f"Trace {trace_path} is empty") from e
        missing = [column for column in REQUIRED_COLUMNS if column not in frame.columns]
        if missing:
            raise SchemaError(f"Trace {trace_path} is missing columns: {', '.join(missing)}")
        if frame.empty:
            raise ValidationError(f"Trace {trace_path} has no rows")
        return frame

    def export_curves(self, trace_path: str, out_path: str) -> str:
        """Render loss components and lambda_u against iteration; format follows the suffix"""
        suffix = os.path.splitext(out_path)[1].lower().lstrip('.')
        if not suffix:
            suffix, out_path = 'svg', out_path + '.svg'
        if suffix not in FORMATS:
            raise ValidationError(f"Unsupported image format '.{suffix}'; use .svg or .png")

        frame = self.load_trace(trace_path)
        fig, (ax_loss, ax_weight) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
        for column in LOSS_COLUMNS:
            ax_loss.plot(frame['iteration'], frame[column], label=column)
        ax_loss.set_ylabel('loss')
        ax_loss.legend(loc='upper right', fontsize='small')
        ax_loss.grid(alpha=0.3)

        ax_weight.plot(frame['iteration'], frame['lambda_u'], color='tab:purple')
        ax_weight.set_xlabel('iteration')
        ax_weight.set_ylabel('lambda_u')
        ax_weight.grid(alpha=0.3)

        fig.tight_layout()
        try:
            fig.savefig(out_path, format=suffix)
        finally:
            plt.close(fig)
        logger.info(f"Curves for {len(frame)} iterations written to {out_path}")
        return out_path
