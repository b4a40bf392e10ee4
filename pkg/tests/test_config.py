import math
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from activevision.config import RunConfig, dumps, echo_config, load_config, loads, parse_overrides
from activevision.errors import ConfigurationError
from activevision.seeding import MAX_SEED, stream, stream_seed

README = Path(__file__).resolve().parents[1] / "README.md"


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        p = tmp_path / "empty.cfg"
        p.write_text("")
        assert load_config(p) == RunConfig()
        assert loads("# only a comment\n\n") == RunConfig()

    def test_defaults_documented(self):
        text = README.read_text()
        for line in dumps(RunConfig()).splitlines()[1:]:
            assert line in text, line

    def test_builders_use_radians(self):
        cfg = RunConfig()
        assert cfg.env_config().step_size == pytest.approx(math.pi / 60)
        assert cfg.intrinsics().horizontal_fov == pytest.approx(math.pi / 3)
        assert cfg.noise().bearing_sigma == pytest.approx(math.radians(2))

    @pytest.mark.parametrize("text", ["gamma = 1.5", "nonsense = 1", "gamma", "batch_size = 3.5",
                                      "gamma = 0.9\ngamma = 0.8", "diagonal_actions = maybe",
                                      "robustness_replan = hourly", "seed = -1", "image_width = 0",
                                      "robustness_sigmas = 0.1, -0.2"])
    def test_rejected(self, text):
        with pytest.raises(ConfigurationError):
            loads(text)

    def test_overrides(self):
        cfg = parse_overrides(["image_width=80", "image_height = 60", ("diagonal_actions", "true")])
        assert (cfg.image_width, cfg.image_height, cfg.diagonal_actions) == (80, 60, True)
        assert cfg.trainer_config().total_steps == 30_000

    def test_echo(self, tmp_path):
        cfg = parse_overrides(["seed=7", "robustness_sigmas=0, 0.5"])
        path = echo_config(cfg, tmp_path)
        assert path.name == "config.resolved"
        assert loads(path.read_text()) == cfg

    @given(gamma=st.floats(0, 1), lr=st.floats(0, 1e-2), steps=st.integers(1, 10 ** 6),
           sigmas=st.lists(st.floats(0, 5), min_size=1, max_size=6), seed=st.integers(0, MAX_SEED),
           diag=st.booleans())
    def test_round_trip(self, gamma, lr, steps, sigmas, seed, diag):
        cfg = parse_overrides([("gamma", repr(gamma)), ("learning_rate", repr(lr)), ("total_steps", str(steps)),
                               ("robustness_sigmas", ", ".join(map(repr, sigmas))), ("seed", str(seed)),
                               ("diagonal_actions", str(diag).lower())]).validate()
        assert loads(dumps(cfg)) == cfg


class TestSeeding:
    def test_streams_independent(self):
        a = stream(5, "env").random(4)
        b = stream(5, "weights").random(4)
        assert not (a == b).all()
        assert (stream(5, "env").random(4) == a).all()

    def test_extra_keys(self):
        assert stream_seed(1, "eval", 0) != stream_seed(1, "eval", 1)
        assert stream_seed(1, "eval", 0) == stream_seed(1, "eval", 0)

    def test_range(self):
        stream(MAX_SEED, "env")
        with pytest.raises(ValueError):
            stream(MAX_SEED + 1, "env")
