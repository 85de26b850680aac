import math

import pandas as pd
import pytest

from models.report_models import TRACE_COLUMNS
from services.curve_service import CurveService
from utils.errors import SchemaError, ValidationError


@pytest.fixture
def trace_path(tmp_path):
    rows = []
    for t in range(5):
        lambda_u = 0.1 * math.exp(-5 * (1 - t / 4) ** 2)
        rows.append({'iteration': t, 'l_sup_1': 1.0 / (t + 1), 'l_sup_2': 1.1 / (t + 1), 'l_unsup': 0.5,
                     'l_cog': 0.2, 'l_mix': 0.3, 'lambda_u': lambda_u,
                     'l_total': 2.1 / (t + 1) + 0.5 + 0.5 * lambda_u, 'pseudo_labeler': 1, 'wall_ms': 0.0})
    path = tmp_path / 'trace.csv'
    pd.DataFrame(rows, columns=TRACE_COLUMNS).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def curves():
    return CurveService()


def test_svg_export(curves, trace_path, tmp_path):
    out = curves.export_curves(trace_path, str(tmp_path / 'curves.svg'))

    content = open(out).read()
    assert content.lstrip().startswith('<?xml') and '<svg' in content


def test_png_export(curves, trace_path, tmp_path):
    out = curves.export_curves(trace_path, str(tmp_path / 'curves.png'))

    with open(out, 'rb') as f:
        assert f.read(8) == b'\x89PNG\r\n\x1a\n'


def test_missing_suffix_defaults_to_svg(curves, trace_path, tmp_path):
    out = curves.export_curves(trace_path, str(tmp_path / 'curves'))
    assert out.endswith('curves.svg')


def test_unsupported_format_rejected(curves, trace_path, tmp_path):
    with pytest.raises(ValidationError):
        curves.export_curves(trace_path, str(tmp_path / 'curves.gif'))


def test_missing_column_is_schema_error(curves, trace_path, tmp_path):
    broken = tmp_path / 'broken.csv'
    pd.read_csv(trace_path).drop(columns=['l_cog']).to_csv(broken, index=False)

    with pytest.raises(SchemaError, match='l_cog'):
        curves.export_curves(str(broken), str(tmp_path / 'out.svg'))


def test_missing_trace_is_validation_error(curves, tmp_path):
    with pytest.raises(ValidationError):
        curves.load_trace(str(tmp_path / 'absent.csv'))


def test_header_only_trace_has_no_rows(curves, tmp_path):
    path = tmp_path / 'empty.csv'
    pd.DataFrame(columns=TRACE_COLUMNS).to_csv(path, index=False)

    with pytest.raises(ValidationError):
        curves.load_trace(str(path))


def test_loaded_warmup_endpoints(curves, trace_path):
    frame = curves.load_trace(trace_path)

    assert frame['lambda_u'].iloc[0] == pytest.approx(0.1 * math.exp(-5), rel=1e-12)
    assert frame['lambda_u'].iloc[-1] == pytest.approx(0.1, rel=1e-12)
