import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vind.config import RunConfig, emit_config, load_config, parse_config, parse_synth_spec
from vind.errors import ConfigError


def test_minimal_config_gets_defaults():
    cfg = parse_config("seed = 3\n")
    assert cfg.seed == 3
    assert cfg.experiment == "gamma-normal-mse"
    assert cfg.output_dir == "out"
    assert cfg.sweep.epsilons == [0.1, 1.0, 10.0, 100.0]
    assert cfg.sweep.iterations == 200 and cfg.sweep.n_reps == 1000 and cfg.sweep.n_per_estimate == 2
    assert cfg.fit.n_samples == 3 and cfg.fit.arm == "vind"
    assert cfg.data.source == "synthetic"
    assert cfg.epsilon == {} and cfg.lr == {}


def test_negative_epsilon_names_the_key():
    with pytest.raises(ConfigError, match=r"epsilon\.tau\.alpha"):
        parse_config('[epsilon]\n"tau.alpha" = -1\n')


def test_nonpositive_sweep_epsilon_names_the_index():
    with pytest.raises(ConfigError, match=r"sweep\.epsilons.*epsilons\[1\]"):
        parse_config("[sweep]\nepsilons = [1.0, 0.0]\n")


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config('seed = 1\nexperiment = "linreg-fit"\noutput_dir = \n')


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="colour"):
        parse_config("colour = 1\n")
    with pytest.raises(ConfigError, match=r"fit\.bogus"):
        parse_config("[fit]\nbogus = 2\n")


def test_bad_enum_and_types():
    with pytest.raises(ConfigError, match="experiment"):
        parse_config('experiment = "nope"\n')
    with pytest.raises(ConfigError, match=r"estimator\.tau\.alpha"):
        parse_config('[estimator]\n"tau.alpha" = "magic"\n')
    with pytest.raises(ConfigError, match="seed"):
        parse_config("seed = -4\n")


def test_csv_source_needs_existing_path(tmp_path):
    with pytest.raises(ConfigError, match="data"):
        parse_config('[data]\nsource = "csv"\n')
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(f'[data]\nsource = "csv"\npath = "{tmp_path / "missing.csv"}"\n')
    f = tmp_path / "x.csv"
    f.write_text("date,a\nt,1\n")
    assert parse_config(f'[data]\nsource = "csv"\npath = "{f}"\n').data.path == str(f)


def test_load_config_reports_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")


def test_full_config_round_trip():
    text = '''
experiment = "student-wishart-fit"
seed = 12
output_dir = "runs/a"

[data]
n = 160
d = 5
nu_true = 5.0

[prior]
p0 = 7.0
a0 = 3.0

[fit]
arm = "bbvi_rb-frozen-p"
iterations = 50
n_samples = 3

[init]
"nu.alpha" = 2.5
"mu.loc" = [0.0, 0.1, 0.2, 0.3, 0.4]

[estimator]
"nu.alpha" = "vind"

[epsilon]
"prec.df" = 10.0

[lr]
"prec.df" = 0.001
'''
    cfg = parse_config(text)
    again = parse_config(emit_config(cfg))
    assert again == cfg
    assert again.init["mu.loc"] == [0.0, 0.1, 0.2, 0.3, 0.4]


blocks = st.sampled_from(["tau.alpha", "tau.beta", "prec.df", "nu.alpha", "w.loc"])
positive = st.floats(1e-6, 1e6, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**64 - 1),
    experiment=st.sampled_from(["gamma-normal-mse", "linreg-fit", "student-wishart-fit", "variance-probe"]),
    epsilons=st.lists(positive, min_size=1, max_size=5),
    eps=st.dictionaries(blocks, positive, max_size=3),
    lr=st.dictionaries(blocks, positive, max_size=3),
    iterations=st.none() | st.integers(0, 10**6),
)
def test_emit_parse_round_trip(seed, experiment, epsilons, eps, lr, iterations):
    cfg = RunConfig.model_validate({
        "seed": seed, "experiment": experiment, "sweep": {"epsilons": epsilons},
        "epsilon": eps, "lr": lr, "fit": {"iterations": iterations},
    })
    assert parse_config(emit_config(cfg)) == cfg


def test_synth_spec():
    spec = parse_synth_spec('kind = "linreg"\nn = 50\nd = 3\n')
    assert (spec.kind, spec.n, spec.d) == ("linreg", 50, 3)
    with pytest.raises(ConfigError, match="kind"):
        parse_synth_spec('kind = "tea"\n')
    with pytest.raises(ConfigError, match="line 1"):
        parse_synth_spec("n = = 3\n")
