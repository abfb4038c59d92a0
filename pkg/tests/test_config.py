import pytest

from tracefix.config import ConfigError, api_key_from_env, load_config, parse_config_text
from tracefix.judge.tools import JudgeToolKind


def test_defaults():
    cfg = load_config(env={})
    assert cfg.judge_mode == "off"
    assert cfg["digest.budget"] == 24000 and cfg["rules.consistency.tau"] == 0.85
    assert cfg.enabled_tools == tuple(JudgeToolKind)
    assert cfg.rule_params.repetition.single == 30
    assert set(cfg.origins.values()) == {"default"}


def test_precedence_cli_env_file_default(tmp_path):
    path = tmp_path / "tf.conf"
    path.write_text("# comment\njudge.model = file-model\ndigest.k=5\nworkers=2\n")
    env = {"TRACEFIX_JUDGE_MODEL": "env-model", "TRACEFIX_DIGEST_K": "7"}
    cfg = load_config(path, env=env, overrides={"judge.model": "cli-model"})
    assert cfg["judge.model"] == "cli-model" and cfg.origins["judge.model"] == "cli"
    assert cfg["digest.k"] == 7 and cfg.origins["digest.k"] == "env"
    assert cfg["workers"] == 2 and cfg.origins["workers"].startswith("file")
    assert cfg["judge.retries"] == 2 and cfg.origins["judge.retries"] == "default"


def test_none_override_does_not_mask_lower_layers():
    cfg = load_config(env={"TRACEFIX_JUDGE_MODEL": "env-model"}, overrides={"judge.model": None})
    assert cfg["judge.model"] == "env-model"


@pytest.mark.parametrize(
    "text",
    ["judge.colour=blue\n", "judge.model=a\njudge.model=b\n", "no equals sign\n"],
)
def test_bad_files(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize(
    "key,value",
    [("digest.budget", "100"), ("judge.mode", "sometimes"), ("rules.consistency.tau", "0"), ("tools.enabled", "Nope"),
     ("ingest.strict", "maybe"), ("judge.temperature", "-1"), ("rules.repetition.single", "1")],
)
def test_bad_values(key, value):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_config(env={}, overrides={key: value})


def test_unknown_override_key():
    with pytest.raises(ConfigError):
        load_config(env={}, overrides={"judge.api_key": "x"})


def test_tools_list():
    cfg = load_config(env={}, overrides={"tools.enabled": "OutputFormat, InputSchema"})
    assert set(cfg.enabled_tools) == {JudgeToolKind.OUTPUT_FORMAT, JudgeToolKind.INPUT_SCHEMA}
    assert load_config(env={}, overrides={"tools.enabled": "none"}).enabled_tools == ()


def test_hash_ignores_output_paths_only():
    base = load_config(env={}).config_hash
    assert load_config(env={}, overrides={"output.report": "elsewhere.json"}).config_hash == base
    assert load_config(env={}, overrides={"digest.k": "4"}).config_hash != base
    assert len(base) == 64


def test_secret_is_not_a_config_key(tmp_path):
    path = tmp_path / "c.conf"
    path.write_text("judge.api_key=sk-x\n")
    with pytest.raises(ConfigError):
        load_config(path, env={})
    assert api_key_from_env({"JUDGE_API_KEY": "sk-y"}) == "sk-y"
    assert api_key_from_env({"JUDGE_API_KEY": ""}) is None
    assert "sk-y" not in load_config(env={"JUDGE_API_KEY": "sk-y"}).canonical_text()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.conf", env={})
