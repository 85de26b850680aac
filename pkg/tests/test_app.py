import os

import pandas as pd
import pytest

from app import UsageError, main, parse_overrides


def _last_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return err[-1] if err else ''


def _write_config(tmp_path, manifest, **values):
    lines = [f'manifest = {manifest}', 'patch_size = 8', 'batch_size = 4', 'labeled_per_batch = 2',
             'iterations = 2', 'base_channels = 2', 'seed = 1', 'log_every = 1', 'deterministic = on',
             f'checkpoint_dir = {tmp_path / "runs"}']
    lines += [f'{k} = {v}' for k, v in values.items()]
    path = tmp_path / 'run.cfg'
    path.write_text('\n'.join(lines) + '\n')
    return str(path)


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / 'data'
    code = main(['gen-data', '--seed', '2', '--out', str(out), '--labeled', '2', '--unlabeled', '2',
                 '--test', '1', '--val', '1', '--size', '16,16,16'])
    assert code == 0
    return str(out / 'manifest.json')


def test_gen_data_is_reproducible(tmp_path, capsys):
    for name in ('a', 'b'):
        assert main(['gen-data', '--seed', '5', '--out', str(tmp_path / name), '--labeled', '1',
                     '--unlabeled', '1', '--test', '1', '--size', '8,8,8']) == 0

    for root, _, files in os.walk(tmp_path / 'a'):
        for name in files:
            path = os.path.join(root, name)
            twin = path.replace(str(tmp_path / 'a'), str(tmp_path / 'b'), 1)
            with open(path, 'rb') as a, open(twin, 'rb') as b:
                assert a.read() == b.read()


def test_end_to_end_pipeline(tmp_path, dataset, capsys):
    config_path = _write_config(tmp_path, dataset)
    runs = tmp_path / 'runs'
    capsys.readouterr()

    assert main(['train', '--config', config_path, '--set', 'iterations=3']) == 0
    final = str(runs / 'final.pt')
    assert capsys.readouterr().out.strip() == final
    assert len(pd.read_csv(runs / 'trace.csv')) == 3

    metrics = str(tmp_path / 'metrics.csv')
    assert main(['eval', '--checkpoint', final, '--out', metrics]) == 0
    frame = pd.read_csv(metrics)
    assert list(frame['case_id'])[-2:] == ['mean', 'std']

    volume = os.path.join(os.path.dirname(dataset), 'test', 'test_000.vol')
    assert main(['infer', '--checkpoint', final, '--volume', volume,
                 '--out', str(tmp_path / 'pred.lbl')]) == 0
    assert os.path.isfile(tmp_path / 'pred.lbl')

    assert main(['export-curves', '--trace', str(runs / 'trace.csv'), '--out', str(tmp_path / 'c.svg')]) == 0
    assert os.path.isfile(tmp_path / 'c.svg')


def test_ablate_command(tmp_path, dataset):
    config_path = _write_config(tmp_path, dataset, iterations=1)
    out = str(tmp_path / 'ablation.csv')

    assert main(['ablate', '--config', config_path, '--seeds', '1', '--variants', 'baseline,dca', '--out', out]) == 0
    assert list(pd.read_csv(out)['variant']) == ['baseline', 'dca', 'baseline', 'baseline', 'dca', 'dca']


def test_dca_off_gives_zero_mix_loss(tmp_path, dataset):
    config_path = _write_config(tmp_path, dataset)

    assert main(['train', '--config', config_path, '--set', 'dca=off']) == 0
    trace = pd.read_csv(tmp_path / 'runs' / 'trace.csv')
    assert (trace['l_mix'] == 0.0).all()


def test_bad_config_value_is_config_error(tmp_path, dataset, capsys):
    config_path = _write_config(tmp_path, dataset)

    assert main(['train', '--config', config_path, '--set', 'labeled_per_batch=9']) == 1
    assert _last_line(capsys).startswith('E_CONFIG: ')


def test_missing_trace_is_validation_error(tmp_path, capsys):
    assert main(['export-curves', '--trace', str(tmp_path / 'absent.csv'), '--out', str(tmp_path / 'x.svg')]) == 1
    assert _last_line(capsys).startswith('E_VALIDATION: ')


def test_unknown_command_is_usage_error(capsys):
    assert main(['fly']) == 2
    assert _last_line(capsys).startswith('E_USAGE: ')


def test_missing_required_option_is_usage_error(capsys):
    assert main(['train']) == 2
    assert _last_line(capsys).startswith('E_USAGE: ')


def test_malformed_override():
    with pytest.raises(UsageError):
        parse_overrides(['iterations'])
    assert parse_overrides([' lr = 0.1 ']) == {'lr': '0.1'}


def test_gen_data_without_labeled_cases(tmp_path, capsys):
    assert main(['gen-data', '--out', str(tmp_path / 'd'), '--labeled', '0', '--size', '8,8,8']) == 1
    assert _last_line(capsys).startswith('E_VALIDATION: ')


def test_missing_config_file(tmp_path, capsys):
    assert main(['train', '--config', str(tmp_path / 'absent.cfg')]) == 1
    assert _last_line(capsys).startswith('E_CONFIG: ')


def test_unexpected_failure_prints_one_line(monkeypatch, capsys):
    def broken(args):
        raise RuntimeError('disk\nvanished')

    monkeypatch.setattr('app.run', broken)

    assert main(['export-curves', '--trace', 't.csv', '--out', 'c.svg']) == 3
    assert capsys.readouterr().err.strip().splitlines() == ['E_INTERNAL: RuntimeError: disk vanished']
