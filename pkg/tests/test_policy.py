import pytest
from hypothesis import given
from hypothesis import strategies as st

from aalkit.augment.policy import (
    APPLY_ORDER,
    DATASET_PARAMS,
    AugmentationOp,
    PolicyError,
    available_tokens,
    canonical_name,
    parse_tokens,
    policy_from_name,
)


class TestParsing:
    @pytest.mark.parametrize("name,tokens", [
        ("CHV", ("C", "H", "V")),
        ("chv", ("C", "H", "V")),
        ("VHC", ("C", "H", "V")),
        ("CHV+DROP+CUT", ("C", "H", "V", "DROP", "CUT")),
        ("chv + drop + cut", ("C", "H", "V", "DROP", "CUT")),
        ("CHVWG", ("C", "H", "V", "W", "G")),
        ("R", ("R",)),
        ("DROP", ("DROP",)),
        ("NONE", ()),
        ("none", ()),
        ("", ()),
    ])
    def test_token_extraction(self, name, tokens):
        assert parse_tokens(name) == tokens

    def test_apply_order_normalized(self):
        # spelling order never changes application order
        assert parse_tokens("G+DROP+WCH") == ("C", "H", "W", "DROP", "G")

    @pytest.mark.parametrize("bad", ["CHX", "Q", "CHV++CUT", "CC", "DROP+DROP",
                                     "CHV+DORP"])
    def test_malformed_rejected(self, bad):
        with pytest.raises(PolicyError):
            parse_tokens(bad)


class TestCanonicalName:
    @pytest.mark.parametrize("tokens,name", [
        (("C", "H", "V"), "CHV"),
        (("V", "C", "H"), "CHV"),
        (("C", "H", "V", "W", "G"), "CHVWG"),
        (("C", "H", "V", "DROP", "CUT"), "CHV+DROP+CUT"),
        (("DROP",), "DROP"),
        ((), "NONE"),
    ])
    def test_rendering(self, tokens, name):
        assert canonical_name(tokens) == name

    def test_unknown_token_rejected(self):
        with pytest.raises(PolicyError):
            canonical_name(("C", "Z"))

    @given(st.sets(st.sampled_from(APPLY_ORDER)))
    def test_roundtrip(self, tokens):
        name = canonical_name(tokens)
        assert set(parse_tokens(name)) == tokens
        assert canonical_name(parse_tokens(name)) == name


class TestTables:
    def test_small_image_parameters(self):
        t = DATASET_PARAMS["omniglot"]
        assert t["C"] == {"pad": 7}
        assert t["H"] == {"p": 0.5}
        assert t["V"] == {"p": 0.5}
        assert t["R"] == {"low": 1.0, "high": 30.0}
        assert t["W"]["base"] == 14 and t["W"]["extra"] == 6
        assert t["DROP"] == {"p": 0.3}
        assert t["CUT"] == {"holes": 5, "side_lo": 4, "side_hi": 14}
        assert "G" not in t

    def test_large_image_parameters(self):
        t = DATASET_PARAMS["miniimagenet"]
        assert t["C"] == {"pad": 21}
        assert t["R"] == {"low": 1.0, "high": 270.0}
        assert t["W"]["base"] == 42 and t["W"]["extra"] == 41
        assert t["DROP"] == {"p": 0.7}
        assert t["CUT"] == {"holes": 5, "side_lo": 11, "side_hi": 42}
        assert t["G"] == {"p": 0.5}

    def test_synthetic_mirrors_small(self):
        assert DATASET_PARAMS["synthetic"] == DATASET_PARAMS["omniglot"]

    def test_available_tokens(self):
        assert "G" not in available_tokens("omniglot")
        assert "G" in available_tokens("miniimagenet")
        assert available_tokens("omniglot") == ("C", "H", "V", "R", "W",
                                                "DROP", "CUT")


class TestPolicyFromName:
    def test_builds_ordered_ops(self):
        p = policy_from_name("drop+vhc", "omniglot")
        assert p.name == "CHV+DROP"
        assert p.tokens == ("C", "H", "V", "DROP")
        assert p.ops[0].params == {"pad": 7}

    def test_grayscale_rejected_on_single_channel(self):
        with pytest.raises(PolicyError, match="not available"):
            policy_from_name("CHVG", "omniglot")
        policy_from_name("CHVG", "miniimagenet")  # fine there

    def test_unknown_dataset(self):
        with pytest.raises(PolicyError, match="dataset"):
            policy_from_name("CHV", "imagenet")

    def test_empty_policy(self):
        p = policy_from_name("NONE", "omniglot")
        assert p.ops == ()
        assert p.name == "NONE"

    def test_op_token_validated(self):
        with pytest.raises(PolicyError):
            AugmentationOp(token="Z", params={})
