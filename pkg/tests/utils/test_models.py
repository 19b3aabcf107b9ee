"""Tests for configuration schemas and validation error reporting."""

import pytest
from pydantic import ValidationError

from app.utils.exceptions import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    ConfigurationError,
    NumericalAbortError,
    SingularSystemError,
    configuration_error_from,
    format_field_path,
    get_error_key,
)
from app.utils.models import (
    AlgorithmKind,
    CampaignEntry,
    CommPolicyKind,
    NoiseSourceSpec,
    PathSynthesisSpec,
    ScenarioFile,
    SceneSettings,
    SimConfig,
    TransmitterReset,
)

pytestmark = pytest.mark.unit


class TestAlgorithmKind:
    @pytest.mark.parametrize(
        ("algorithm", "policy"),
        [
            (AlgorithmKind.NONE, CommPolicyKind.NONE),
            (AlgorithmKind.FXLMS, CommPolicyKind.NONE),
            (AlgorithmKind.MEFXLMS, CommPolicyKind.NONE),
            (AlgorithmKind.MGDFXLMS, CommPolicyKind.PER_SAMPLE_GRADIENT),
            (AlgorithmKind.SCDMCANC, CommPolicyKind.SYNC_MWD),
            (AlgorithmKind.ACDMCANC, CommPolicyKind.ASYNC_MWD),
        ],
    )
    def test_comm_policy(self, algorithm, policy):
        assert algorithm.comm_policy is policy
        assert algorithm.needs_compensation == (policy is not CommPolicyKind.NONE)

    def test_weight_constrained(self):
        constrained = {a for a in AlgorithmKind if a.weight_constrained}
        assert constrained == {
            AlgorithmKind.WCFXLMS,
            AlgorithmKind.SCDMCANC,
            AlgorithmKind.ACDMCANC,
        }


class TestSimConfig:
    def test_defaults(self):
        config = SimConfig()
        assert config.sample_count == 16000
        assert config.step_sizes == (1e-6,) * 4
        assert config.penalties == (800.0,) * 4
        assert config.scene_seed == 0
        assert config.noise_seed == 1
        assert config.comm_policy.kind is CommPolicyKind.ASYNC_MWD

    def test_per_node_values(self):
        config = SimConfig(nodes=2, step_size=[1e-6, 2e-6], penalty=[0.0, 10.0])
        assert config.step_sizes == (1e-6, 2e-6)
        assert config.penalties == (0.0, 10.0)

    def test_list_length_must_match_nodes(self):
        with pytest.raises(ValidationError, match="list length"):
            SimConfig(nodes=3, step_size=[1e-6, 1e-6])

    def test_duration_must_give_whole_samples(self):
        with pytest.raises(ValidationError, match="integral"):
            SimConfig(fs=16000.0, duration=1.00001)

    def test_non_positive_step(self):
        with pytest.raises(ValidationError):
            SimConfig(step_size=0.0)

    def test_negative_penalty(self):
        with pytest.raises(ValidationError):
            SimConfig(penalty=-1.0)

    def test_relaxation_must_contract(self):
        with pytest.raises(ValidationError, match="step_size \\* penalty"):
            SimConfig(algorithm="WCFxLMS", step_size=0.01, penalty=100.0)
        # only weight-constrained algorithms use the penalty
        SimConfig(algorithm="FxLMS", step_size=0.01, penalty=100.0)

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            SimConfig.model_validate({"nodes": 2, "bogus": 1})

    def test_explicit_seeds_win(self):
        config = SimConfig.model_validate(
            {"seed": 9, "scene": {"synthesis": {"seed": 3}}, "noise": {"seed": 4}}
        )
        assert config.scene_seed == 3
        assert config.noise_seed == 4
        assert config.mismatch_seed == 11

    def test_config_hash(self):
        a = SimConfig(nodes=3)
        b = SimConfig.model_validate({"nodes": 3})
        assert a.config_hash() == b.config_hash()
        assert len(a.config_hash()) == 64
        assert a.config_hash() != SimConfig(nodes=3, seed=1).config_hash()


class TestNestedSettings:
    def test_band_order(self):
        with pytest.raises(ValidationError):
            NoiseSourceSpec(band=(1000.0, 100.0))

    def test_even_fir_rejected(self):
        with pytest.raises(ValidationError):
            NoiseSourceSpec(fir_taps=254)

    def test_tonal_needs_tones(self):
        with pytest.raises(ValidationError):
            NoiseSourceSpec(kind="tonal-mixture")

    def test_file_stream_needs_path(self):
        with pytest.raises(ValidationError):
            NoiseSourceSpec(kind="file-stream")

    def test_delay_range(self):
        with pytest.raises(ValidationError, match="delay"):
            PathSynthesisSpec(length=8, delay_min=2, delay_max=8)

    def test_mismatch_minus_infinity_means_exact(self):
        assert SceneSettings(mismatch_db=float("-inf")).mismatch_db is None
        assert not SceneSettings().has_mismatch
        assert SceneSettings(mismatch_db=-20.0).has_mismatch

    def test_mismatch_plus_infinity_rejected(self):
        with pytest.raises(ValidationError):
            SceneSettings(mismatch_db=float("inf"))

    def test_file_scene_needs_path(self):
        with pytest.raises(ValidationError):
            SceneSettings(source="file")


class TestScenarioFile:
    def test_no_campaign_runs_base(self):
        scenario = ScenarioFile(base=SimConfig(name="solo"))
        assert [c.name for c in scenario.resolve()] == ["solo"]

    def test_entries_override_base(self):
        scenario = ScenarioFile(
            base=SimConfig(nodes=2, penalty=50.0),
            campaign=[
                CampaignEntry(name="mef", algorithm="MEFxLMS"),
                CampaignEntry(
                    name="acd",
                    algorithm="ACDMCANC",
                    step_size=2e-6,
                    transmitter_reset="keep",
                ),
            ],
        )
        mef, acd = scenario.resolve()
        assert mef.name == "mef"
        assert mef.algorithm is AlgorithmKind.MEFXLMS
        assert mef.penalties == (50.0, 50.0)
        assert acd.step_sizes == (2e-6, 2e-6)
        assert acd.trigger.transmitter_reset is TransmitterReset.KEEP
        # the base scene and noise are shared
        assert mef.scene == acd.scene
        assert mef.noise_seed == acd.noise_seed

    def test_entry_is_revalidated(self):
        scenario = ScenarioFile(
            base=SimConfig(penalty=800.0),
            campaign=[CampaignEntry(name="wc", algorithm="WCFxLMS", step_size=0.01)],
        )
        with pytest.raises(ValidationError):
            scenario.resolve()

    def test_duplicate_names(self):
        with pytest.raises(ValidationError, match="unique"):
            ScenarioFile(
                campaign=[
                    CampaignEntry(name="a", algorithm="FxLMS"),
                    CampaignEntry(name="a", algorithm="MEFxLMS"),
                ]
            )


class TestErrorReporting:
    def test_first_offending_key(self):
        with pytest.raises(ValidationError) as exc:
            ScenarioFile.model_validate({"base": {"nodes": 0}})
        error = configuration_error_from(exc.value)
        assert error.key == "base.nodes"
        assert error.code == "VALIDATION_NODES_TOO_SMALL"
        assert error.exit_code == EXIT_CONFIG

    def test_unknown_key_code(self):
        with pytest.raises(ValidationError) as exc:
            ScenarioFile.model_validate({"base": {"nodse": 3}})
        error = configuration_error_from(exc.value)
        assert error.key == "base.nodse"
        assert error.code == "VALIDATION_NODSE_UNKNOWN_KEY"

    def test_list_paths(self):
        assert format_field_path(("campaign", 1, "algorithm")) == "campaign[1].algorithm"
        assert format_field_path(()) == "unknown"

    @pytest.mark.parametrize(
        ("error_type", "message", "key"),
        [
            ("greater_than", "", "TOO_SMALL"),
            ("extra_forbidden", "", "UNKNOWN_KEY"),
            ("enum", "", "INVALID_CHOICE"),
            ("value_error", "duration * fs must be an integral sample count", "NOT_INTEGRAL"),
            ("value_error", "step_size list length must equal nodes", "INVALID_LENGTH"),
            ("value_error", "something else", "INVALID_VALUE"),
            ("mystery", "", "INVALID"),
        ],
    )
    def test_error_keys(self, error_type, message, key):
        assert get_error_key(error_type, message) == key

    def test_configuration_error_carries_key(self):
        error = ConfigurationError("bad", key="base.fs")
        assert str(error) == "CONFIGURATION_ERROR: bad"
        assert error.key == "base.fs"

    def test_numerical_abort_names_node_and_sample(self):
        error = NumericalAbortError(node=2, sample=99, quantity="weights")
        assert "node 3" in str(error)
        assert "sample 99" in str(error)
        assert error.exit_code == EXIT_NUMERICAL

    def test_singular_system_names_pair(self):
        error = SingularSystemError((0, 1))
        assert error.pair == (0, 1)
        assert "c_12" in error.message
