import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_sched.core import CVaR, ChiSquare, DimensionError, FullSimplex, GroupWeights, Singleton
from robust_sched.objectives import Baselines, read_baselines, robust_loss, weighted_loss, write_baselines

U3 = GroupWeights.uniform(3)


@st.composite
def grouped_losses(draw, max_n=8):
    n = draw(st.integers(2, max_n))
    v = np.array(draw(st.lists(st.floats(-3, 3), min_size=n, max_size=n)))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    return v, GroupWeights(raw / raw.sum())


def all_sets(p):
    return [Singleton(p), FullSimplex(), CVaR(0.3, p), CVaR(1.0, p), ChiSquare(0.05, p), ChiSquare(1.5, p)]


class TestWeightedLoss:
    def test_mean(self):
        assert weighted_loss((0.1, 0.1, 1.1), U3) == pytest.approx(1.3 / 3, abs=1e-15)

    def test_dot_product(self):
        assert weighted_loss((0.1, 0.1, 1.1), (0.1, 0.3, 0.6)) == pytest.approx(0.70, abs=1e-15)

    def test_vertex_picks_group(self):
        assert weighted_loss((3.0, -2.0, 7.0), GroupWeights.vertex(3, 1)) == -2.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            weighted_loss((1.0, 2.0), U3)


class TestRobustLoss:
    def test_toy_values(self):
        assert robust_loss((0.1, 0.1, 1.1), ChiSquare(0.1, U3)) == pytest.approx(0.644151844, abs=1e-9)
        assert robust_loss((1.0, 1.0, 1.0), FullSimplex()) == 1.0

    def test_baselined_to_zero(self):
        b = Baselines(np.array([0.3, -1.0, 2.5]))
        for uset in all_sets(U3):
            assert robust_loss(b.b, uset, b) == 0.0

    def test_baseline_length_checked(self):
        with pytest.raises(DimensionError):
            robust_loss((1.0, 2.0, 3.0), FullSimplex(), Baselines(np.zeros(2)))

    @settings(max_examples=150, deadline=None)
    @given(grouped_losses())
    def test_special_sets_are_exact(self, vp):
        v, p = vp
        assert robust_loss(v, Singleton(p)) == weighted_loss(v, p)
        assert robust_loss(v, FullSimplex()) == v.max()
        assert robust_loss(v, CVaR(1.0, p)) == weighted_loss(v, p)
        assert robust_loss(v, CVaR(float(p.weights.min()), p)) == pytest.approx(v.max(), abs=1e-12)

    @settings(max_examples=150, deadline=None)
    @given(grouped_losses())
    def test_chi_square_between_average_and_max(self, vp):
        v, p = vp
        lo, hi = robust_loss(v, Singleton(p)), robust_loss(v, FullSimplex())
        prev = lo
        for rho in (1e-3, 0.05, 0.2, 1.0, 4.0):
            val = robust_loss(v, ChiSquare(rho, p))
            assert lo - 1e-9 <= val <= hi + 1e-12
            assert val >= prev - 1e-9
            prev = val

    @settings(max_examples=100, deadline=None)
    @given(grouped_losses(), st.data())
    def test_baseline_shift_identity(self, vp, data):
        v, p = vp
        b = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=v.size, max_size=v.size)))
        for uset in all_sets(p):
            assert robust_loss(v, uset, Baselines(b)) == pytest.approx(robust_loss(v - b, uset), abs=1e-12)


class TestBaselineFiles:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "b.tsv"
        write_baselines(path, ["de", "fr", "aze"], [0.5, 1.25, 1e-17])
        b = read_baselines(path)
        assert b.group_ids == ("de", "fr", "aze")
        assert b.b.tolist() == [0.5, 1.25, 1e-17]
        assert path.read_bytes() == b"de\t0.5\nfr\t1.25\naze\t1e-17\n"

    def test_aligned_reorders(self, tmp_path):
        path = tmp_path / "b.tsv"
        path.write_text("g1\t2.0\ng0\t1.0\n", encoding="utf-8")
        assert read_baselines(path).aligned(["g0", "g1"]).b.tolist() == [1.0, 2.0]

    def test_aligned_rejects_mismatch(self, tmp_path):
        path = tmp_path / "b.tsv"
        path.write_text("g1\t2.0\ng9\t1.0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="missing"):
            read_baselines(path).aligned(["g0", "g1"])

    @pytest.mark.parametrize(
        "text, message",
        [("g0 1.0\n", "expected"), ("g0\tabc\n", "not a number"), ("g0\t1\ng0\t2\n", "duplicate"), ("\n", "no baselines")],
    )
    def test_malformed(self, tmp_path, text, message):
        path = tmp_path / "b.tsv"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ValueError, match=message):
            read_baselines(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "b.tsv"
        path.write_text("g0\tnan\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_baselines(path)
