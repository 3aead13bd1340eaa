import pytest

from cogload.config import RunConfig, parse_config, read_config_file
from cogload.errors import ConfigError


@pytest.fixture
def cfg_file(tmp_path):
    def write(text):
        path = tmp_path / 'run.cfg'
        path.write_text(text)
        return str(path)
    return write


class TestParse:

    def test_empty_file_gives_defaults(self, cfg_file):
        cfg = parse_config(cfg_file(''))
        assert cfg == RunConfig()
        assert (cfg.lr, cfg.label_smoothing, cfg.epochs) == (0.0001, 0.2, 50)
        assert cfg.t_w == 10 and cfg.model == 'mhyperlstm'

    def test_file_values_and_comments(self, cfg_file):
        cfg = parse_config(cfg_file('# run\nt_w = 20\nmodel = lstm  # baseline\n\nplot = no\ndata_dir = raw\n'))
        assert cfg.t_w == 20
        assert cfg.model == 'lstm'
        assert cfg.plot is False
        assert cfg.data_dir == 'raw'

    def test_overrides_win_over_file(self, cfg_file):
        assert parse_config(cfg_file('t_w = 20\n'), ['t_w=10']).t_w == 10
        assert parse_config(cfg_file('t_w = 20\n'), ['t_w=10'], t_w=5).t_w == 5
        assert parse_config(cfg_file('t_w = 20\n'), t_w=None).t_w == 20

    @pytest.mark.parametrize('item, key', [
        ('t_w=0', 't_w'),
        ('lr=0', 'lr'),
        ('label_smoothing=1', 'label_smoothing'),
        ('model=gru', 'model'),
        ('split_mode=trial', 'split_mode'),
        ('threshold=1.5', 'threshold'),
        ('eval_models=lstm,rnn', 'eval_models'),
    ])
    def test_rejected_values_name_the_key(self, item, key):
        with pytest.raises(ConfigError) as info:
            parse_config(overrides=[item])
        assert info.value.key == key
        assert str(info.value).startswith(key + ':')

    def test_unknown_key(self, cfg_file):
        with pytest.raises(ConfigError, match='colour'):
            parse_config(cfg_file('colour = red\n'))
        with pytest.raises(ConfigError):
            parse_config(colour='red')

    def test_type_error(self):
        with pytest.raises(ConfigError, match='epochs'):
            parse_config(overrides=['epochs=many'])
        with pytest.raises(ConfigError, match='plot'):
            parse_config(overrides=['plot=maybe'])

    def test_malformed_lines(self, cfg_file):
        with pytest.raises(ConfigError):
            read_config_file(cfg_file('t_w 10\n'))
        with pytest.raises(ConfigError):
            parse_config(overrides=['t_w'])
        with pytest.raises(ConfigError, match='config'):
            read_config_file('/nonexistent/run.cfg')


class TestResolved:

    def test_require(self, tmp_path):
        cfg = parse_config(overrides=['data_dir={}'.format(tmp_path), 'dataset=' + str(tmp_path / 'missing.bin')])
        cfg.require('data_dir', exists=True)
        cfg.require('dataset')
        with pytest.raises(ConfigError, match='dataset'):
            cfg.require('dataset', exists=True)
        with pytest.raises(ConfigError, match='checkpoint'):
            cfg.require('checkpoint')

    def test_sizes(self):
        cfg = parse_config(overrides=['n_h=8', 'n_aux=5', 'n_z=3', 'layer_norm=false'])
        size = cfg.size_config('hyperlstm')
        assert (size.n_h, size.n_aux, size.n_z, size.layer_norm, size.n_fc) == (8, 5, 3, False, None)
        assert RunConfig().size_config('lstm').n_h == 100
        assert RunConfig().size_config('mhyperlstm').n_h == 32
        assert RunConfig().size_config('logreg') is None

    def test_windows_and_models(self):
        assert RunConfig().windows == [10]
        assert parse_config(overrides=['eval_windows=5,10,20']).windows == [5, 10, 20]
        assert parse_config(overrides=['eval_models= lstm , logreg']).models == ['lstm', 'logreg']
        with pytest.raises(ConfigError, match='eval_windows'):
            parse_config(overrides=['eval_windows=5,x']).windows

    def test_derived_configs(self):
        cfg = parse_config(overrides=['lr=0.01', 'seed=3', 'separation=0', 'trial_duration=30'])
        train = cfg.train_config(verbose=True)
        assert (train.lr, train.seed, train.verbose) == (0.01, 3, True)
        assert cfg.knobs().separation == 0.0
        assert cfg.scenario().duration == 30.0

    def test_render_lists_every_key(self):
        text = parse_config(overrides=['t_w=5']).render()
        assert 't_w = 5' in text.splitlines()
        assert 'data_dir = ' in text.splitlines()
        assert len(text.splitlines()) == len(RunConfig.__dataclass_fields__)
