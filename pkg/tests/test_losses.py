import numpy as np
import pytest

from conftest import assert_grads_match
from kmgan import clustering, losses
from kmgan.clustering import Centroids
from kmgan.tensor import Tensor


def col(*vals):
    return np.array(vals, dtype=float).reshape(-1, 1)


def assign(features, cents):
    return clustering.assign_labels(features, cents)


def test_build_center_targets_single_class():
    cents = Centroids(col(5.0, 7.0))
    a = assign(col(4.9, 4.8, 5.1), cents)
    targets = losses.build_center_targets(a, cents)
    assert np.array_equal(targets, col(5.0, 5.0, 5.0))


def test_build_center_targets_gather():
    cents = Centroids(col(5.0, 7.0))
    a = assign(col(5.0, 7.0, 5.0), cents)
    targets = losses.build_center_targets(a, cents)
    assert np.array_equal(targets, col(5.0, 7.0, 5.0))


def test_build_center_targets_permutation_equivariant(rng):
    cents = Centroids(rng.normal(size=(3, 4)))
    feats = rng.normal(size=(10, 4))
    a = assign(feats, cents)
    t = losses.build_center_targets(a, cents)
    perm = rng.permutation(10)
    t_perm = losses.build_center_targets(assign(feats[perm], cents), cents)
    assert np.array_equal(t_perm, t[perm])


def test_build_center_targets_rejects_bad_labels():
    cents = Centroids(col(0.0))
    a = assign(col(1.0), cents)
    a.labels = np.array([5])
    with pytest.raises(ValueError):
        losses.build_center_targets(a, cents)


def test_center_loss_symmetric_cancellation(rng):
    cents = Centroids(rng.normal(size=(2, 3)))
    feats = rng.normal(size=(6, 3))
    a = assign(feats, cents)
    out = losses.center_loss(cents, cents.clone(), Tensor(feats), Tensor(feats), a, a)
    assert out.item() == 0.0


def test_center_loss_hand_example():
    # k=1, both centers at 0; real feature 2 smooths to 1, fake feature 4 to 2
    cents_r = Centroids(col(0.0))
    cents_f = Centroids(col(0.0))
    fr, ff = col(2.0), col(4.0)
    ar, af = assign(fr, cents_r), assign(ff, cents_f)
    out = losses.center_loss(cents_r, cents_f, Tensor(fr), Tensor(ff), ar, af)
    assert out.item() == pytest.approx(1.0)


def test_center_loss_empty_class_contributes_raw_center():
    # fake batch lands entirely in class 0, class 1 stays at its center value
    cents_r = Centroids(col(0.0, 0.0))
    cents_f = Centroids(col(0.0, 9.0))
    fr, ff = col(2.0, -2.0), col(1.0)
    ar = assign(fr, cents_r)
    af = assign(ff, cents_f)
    assert np.array_equal(af.labels, [0])
    out = losses.center_loss(cents_r, cents_f, Tensor(fr), Tensor(ff), ar, af)
    # real sum: (0+2)/2 + (0-2)/2 = 0; fake sum: (0+1)/2 + 9/1 = 9.5
    assert out.item() == pytest.approx(9.5)


def test_center_loss_k_mismatch():
    fr = col(0.0)
    ar = assign(fr, Centroids(col(0.0)))
    with pytest.raises(ValueError):
        losses.center_loss(
            Centroids(col(0.0)), Centroids(col(0.0, 1.0)), Tensor(fr), Tensor(fr), ar, ar
        )


def test_center_loss_center_permutation_invariant(rng):
    cents_r = Centroids(rng.normal(size=(3, 2)))
    cents_f = Centroids(rng.normal(size=(3, 2)))
    fr, ff = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    ar, af = assign(fr, cents_r), assign(ff, cents_f)
    base = losses.center_loss(cents_r, cents_f, Tensor(fr), Tensor(ff), ar, af).item()
    perm = np.array([2, 0, 1])
    cents_rp = Centroids(cents_r.centers[perm])
    cents_fp = Centroids(cents_f.centers[perm])
    arp, afp = assign(fr, cents_rp), assign(ff, cents_fp)
    out = losses.center_loss(cents_rp, cents_fp, Tensor(fr), Tensor(ff), arp, afp).item()
    assert out == pytest.approx(base, rel=1e-12)


def test_d_loss_real_on_centers_nonpositive(rng):
    c_real = rng.normal(size=(4, 3))
    c_gen = rng.normal(size=(4, 3))
    fake = rng.normal(size=(4, 3))
    out = losses.d_loss(Tensor(c_real.copy()), c_real, Tensor(fake), c_gen)
    assert out.item() <= 0.0


def test_d_loss_hand_example():
    out = losses.d_loss(Tensor(col(0.0)), col(0.0), Tensor(col(3.0)), col(0.0))
    assert out.item() == pytest.approx(-3.0)


def test_g_loss_hand_examples():
    c_gen = col(0.0)
    assert losses.g_loss(Tensor(col(0.0)), c_gen).item() == 0.0
    assert losses.g_loss(Tensor(col(3.0)), c_gen).item() == pytest.approx(3.0)


def test_g_loss_is_negated_second_d_term(rng):
    fake = rng.normal(size=(5, 3))
    c_gen = rng.normal(size=(5, 3))
    real = rng.normal(size=(5, 3))
    lg = losses.g_loss(Tensor(fake), c_gen).item()
    ld_zero_first = losses.d_loss(Tensor(real.copy()), real, Tensor(fake), c_gen).item()
    assert ld_zero_first == -lg


def test_lambda_zero_paths_bitwise_equal(rng):
    fr = Tensor(rng.normal(size=(4, 3)))
    ff = Tensor(rng.normal(size=(4, 3)))
    c_real = rng.normal(size=(4, 3))
    c_gen = rng.normal(size=(4, 3))
    li = losses.intra_loss(fr, ff)
    le = losses.inter_loss(fr, ff)
    plain_d = losses.d_loss(fr, c_real, ff, c_gen).item()
    gen_d = losses.d_loss(fr, c_real, ff, c_gen, 0.0, li, le).item()
    assert plain_d == gen_d
    plain_g = losses.g_loss(ff, c_gen).item()
    gen_g = losses.g_loss(ff, c_gen, 0.0, le).item()
    assert plain_g == gen_g


def test_d_loss_decreases_toward_center():
    # 1-D probe: moving the real feature toward its target lowers the loss
    prev = np.inf
    for x in (4.0, 3.0, 1.0, 0.5):
        out = losses.d_loss(Tensor(col(x)), col(0.0), Tensor(col(2.0)), col(0.0)).item()
        assert out < prev
        prev = out


def test_intra_inter_identical_features_zero():
    feats = np.ones((3, 2))
    assert losses.intra_loss(Tensor(feats), Tensor(feats)).item() == 0.0
    assert losses.inter_loss(Tensor(feats), Tensor(feats)).item() == 0.0


def test_intra_single_pair():
    # single real pair |0-2| = 2; lone fake feature adds nothing
    out = losses.intra_loss(Tensor(col(0.0, 2.0)), Tensor(col(7.0)), normalize=False)
    assert out.item() == pytest.approx(2.0)


def test_inter_single_cross_pair():
    out = losses.inter_loss(Tensor(col(0.0)), Tensor(col(5.0)), normalize=False)
    assert out.item() == pytest.approx(5.0)


def test_intra_inter_normalization(rng):
    fr, ff = Tensor(rng.normal(size=(4, 2))), Tensor(rng.normal(size=(3, 2)))
    raw_i = losses.intra_loss(fr, ff, normalize=False).item()
    raw_e = losses.inter_loss(fr, ff, normalize=False).item()
    assert losses.intra_loss(fr, ff).item() == pytest.approx(raw_i / (6 + 3))
    assert losses.inter_loss(fr, ff).item() == pytest.approx(raw_e / 12)


def test_intra_inter_permutation_invariant(rng):
    fr, ff = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    base_i = losses.intra_loss(Tensor(fr), Tensor(ff)).item()
    base_e = losses.inter_loss(Tensor(fr), Tensor(ff)).item()
    pr, pf = rng.permutation(5), rng.permutation(4)
    assert losses.intra_loss(Tensor(fr[pr]), Tensor(ff[pf])).item() == pytest.approx(base_i)
    assert losses.inter_loss(Tensor(fr[pr]), Tensor(ff[pf])).item() == pytest.approx(base_e)
    assert base_i >= 0 and base_e >= 0


def test_intra_inter_reject_empty():
    with pytest.raises(ValueError):
        losses.intra_loss(Tensor(np.zeros((0, 1))), Tensor(col(1.0)))
    with pytest.raises(ValueError):
        losses.inter_loss(Tensor(col(1.0)), Tensor(np.zeros((0, 1))))


def test_vanilla_degenerate_discriminator():
    ld, lg = losses.vanilla_gan_losses(Tensor(col(1.0)), Tensor(col(0.0)))
    # clamped at 1e-7: D loss near its optimum, G loss near its worst
    assert ld.item() == pytest.approx(0.0, abs=1e-6)
    assert lg.item() > 15.0


def test_vanilla_half_probabilities():
    ld, lg = losses.vanilla_gan_losses(Tensor(col(0.5)), Tensor(col(0.5)))
    assert ld.item() == pytest.approx(-2 * np.log(0.5))
    assert lg.item() == pytest.approx(-np.log(0.5))


def test_vanilla_saturating_variant():
    _, lg = losses.vanilla_gan_losses(Tensor(col(0.25)), Tensor(col(0.25)), saturating=True)
    assert lg.item() == pytest.approx(np.log(0.75))


def test_vanilla_rejects_out_of_range():
    with pytest.raises(ValueError):
        losses.vanilla_gan_losses(Tensor(col(1.5)), Tensor(col(0.5)))


def test_loss_report_csv_row():
    r = losses.LossReport(1.5, -0.25, 2.0, 0.0, 3.0, True)
    assert losses.LossReport.CSV_HEADER == (
        "iter,l_d,l_g,l_center,l_intra,l_inter,applied_center_step"
    )
    assert r.csv_row(7) == "7,1.5,-0.25,2.0,0.0,3.0,1"


def test_center_loss_gradients(rng):
    for _ in range(20):
        cents_r = Centroids(rng.normal(size=(2, 3)))
        cents_f = Centroids(rng.normal(size=(2, 3)))
        fr = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        ff = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        ar = assign(fr.data, cents_r)
        af = assign(ff.data, cents_f)
        assert_grads_match(
            lambda: losses.center_loss(cents_r, cents_f, fr, ff, ar, af), [fr, ff]
        )


def test_d_and_g_loss_gradients(rng):
    for _ in range(20):
        fr = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        ff = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        c_real = rng.normal(size=(3, 4))
        c_gen = rng.normal(size=(3, 4))
        lam = float(rng.uniform(0.1, 2.0))

        def build_d():
            li = losses.intra_loss(fr, ff)
            le = losses.inter_loss(fr, ff)
            return losses.d_loss(fr, c_real, ff, c_gen, lam, li, le)

        def build_g():
            le = losses.inter_loss(fr, ff)
            return losses.g_loss(ff, c_gen, lam, le)

        assert_grads_match(build_d, [fr, ff])
        assert_grads_match(build_g, [fr, ff])


def test_intra_inter_gradients(rng):
    for _ in range(20):
        fr = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        ff = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        assert_grads_match(lambda: losses.intra_loss(fr, ff), [fr, ff])
        assert_grads_match(lambda: losses.inter_loss(fr, ff), [fr, ff])


def test_vanilla_gradients(rng):
    for _ in range(20):
        pr = Tensor(rng.uniform(0.05, 0.95, size=(4, 1)), requires_grad=True)
        pf = Tensor(rng.uniform(0.05, 0.95, size=(4, 1)), requires_grad=True)
        assert_grads_match(lambda: losses.vanilla_gan_losses(pr, pf)[0], [pr, pf])
        assert_grads_match(lambda: losses.vanilla_gan_losses(pr, pf)[1], [pr, pf])
