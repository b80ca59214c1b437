import pytest

from micropolar import config as cf
from micropolar import dissipation as ds
from micropolar import dynamics as dy

BASE = "model = fractional_3d\nn = 16\ndt = 0.01\n"


def build(text, seed=None):
    return cf.build(cf.parse_text(text), seed)


def test_minimal_config_defaults():
    rc = build(BASE + "# comment\n\nalpha = 1.25  # trailing\n")
    assert rc.spec.model is dy.Model.FRACTIONAL_3D and rc.dim == 3
    assert rc.spec.params.alpha == 1.25 and rc.spec.params.nu == 0.5
    assert rc.stepper.t_end == 1.0 and rc.stepper.scheme is dy.Scheme.STRANG
    assert not rc.cutoff.active and rc.init == "taylor_green"


def test_seed_override():
    assert build(BASE + "seed = 3\n").seed == 3
    assert build(BASE + "seed = 3\n", seed=9).seed == 9


def test_log_model_with_g():
    rc = build("model = log_with_angular\nn = 16\ndt = 0.01\ng = g1\nalpha = 1.25\n")
    assert rc.spec.params.g is ds.G1


def test_lists_and_cutoff():
    rc = build(BASE + "alpha_list = 1.0, 1.25\nbeta_list = 0.5\ncutoff = 5\nsigma = 0, 1.5\n")
    assert rc.alpha_list == (1.0, 1.25) and rc.beta_list == (0.5,)
    assert rc.cutoff.n_cut == 5.0 and rc.sigma == (0.0, 1.5)


@pytest.mark.parametrize(
    "text,message",
    [
        ("model = log_no_angular\nn = 16\ndt = 0.01\n", "key 'g' is required for model log_no_angular"),
        (BASE + "g = g1\n", "key 'g'"),
        ("model = fractional_3d\nn = 16\n", "missing required key(s): dt"),
        (BASE + "foo = 1\n", "line 4: unknown key 'foo'"),
        (BASE + "n = 32\n", "duplicate key 'n'"),
        (BASE + "just text\n", "line 4: expected key = value"),
        ("model = nope\nn = 16\ndt = 0.01\n", "key 'model'"),
        ("model = fractional_3d\nn = 15\ndt = 0.01\n", "key 'n'"),
        ("model = fractional_3d\nn = 16\ndt = 0\n", "key 'dt'"),
        (BASE + "nu = -1\n", "key 'nu'"),
        (BASE + "alpha = abc\n", "key 'alpha'"),
        (BASE + "t_end = inf\n", "key 't_end'"),
        (BASE + "scheme = euler\n", "key 'scheme'"),
        (BASE + "cfl_safety = 2\n", "key 'cfl_safety'"),
        (BASE + "init = vortex\n", "key 'init'"),
        (BASE + "alpha_list = 1, x\n", "key 'alpha_list'"),
        ("model = log_no_angular\nn = 16\ndt = 0.01\ng = g9\n", "key 'g'"),
    ],
)
def test_config_errors_name_the_key(text, message):
    with pytest.raises(cf.ConfigError) as info:
        build(text)
    assert message in str(info.value)


def test_load_missing_file(tmp_path):
    with pytest.raises(cf.ConfigError, match="cannot read config"):
        cf.load(tmp_path / "none.cfg")


def test_load_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(BASE)
    assert cf.load(p).n == 16
