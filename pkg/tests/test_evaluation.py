import numpy as np
import pytest

from shearbc import evaluation as ev


def test_effort_metric_examples():
    assert ev.effort_metric([3.0, 4.0]) == 5.0
    assert ev.effort_metric([0.0, 0.0]) == 0.0
    assert ev.effort_metric([-5.0, 0.0]) == 5.0


def test_knn_two_sample_identical_distributions_near_chance():
    rng = np.random.default_rng(0)
    accs = []
    for s in range(5):
        a = rng.normal(size=(150, 16))
        b = rng.normal(size=(150, 16))
        accs.append(ev.knn_two_sample_accuracy(a, b))
    assert abs(np.mean(accs) - 0.5) < 0.07


def test_knn_two_sample_disjoint_distributions_near_one():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(150, 16))
    b = rng.normal(size=(150, 16)) + 12.0
    assert ev.knn_two_sample_accuracy(a, b) > 0.98


def test_hull_containment():
    rng = np.random.default_rng(2)
    demo = rng.uniform(-1, 1, size=(200, 2))
    inside = rng.uniform(-0.4, 0.4, size=(100, 2))
    outside = rng.uniform(3, 4, size=(100, 2))
    assert ev.hull_containment_2d(demo, inside) > 0.95
    assert ev.hull_containment_2d(demo, outside) == 0.0


def test_latent_shift_score_requires_enough_points():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError, match="at least 50"):
        ev.latent_shift_score(rng.normal(size=(30, 8)), rng.normal(size=(200, 8)),
                              "shear")


def test_latent_shift_score_separation():
    rng = np.random.default_rng(4)
    demo = rng.normal(size=(120, 8))
    roll = rng.normal(size=(120, 8)) + 10.0
    rep = ev.latent_shift_score(demo, roll, "raw", seed=0, max_points=100,
                                perplexity=20, iterations=800)
    assert rep.knn_accuracy > 0.95
    assert rep.hull_containment < 0.2
    same = ev.latent_shift_score(demo, demo + rng.normal(scale=1e-3, size=demo.shape),
                                 "shear", seed=0, max_points=100,
                                 with_embedding=False)
    assert same.knn_accuracy < 0.65


def test_effort_report_percent_increase():
    rep = ev.EffortReport("jp", "shear", efforts=[6.0, 6.0], baseline_mean=3.0)
    assert rep.pct_increase == 100.0


def test_format_tables_render():
    rep = ev.EffortReport("jp", "shear", efforts=[6.0, 5.0],
                          trial_means=[5.5], failures=["done"], baseline_mean=2.5)
    txt = ev.format_effort_table([rep], (2.5, 1.0))
    assert "hardware (paper)" in txt and "jp/shear" in txt
    cells = [ev.ForceEstCell("ae", "shear", [0.1, 0.1, 0.1], [1, 1, 1], [1, 1, 1])]
    txt = ev.format_force_table(cells)
    assert "ae/shear" in txt


def test_demo_effort_baseline():
    class Ep:
        f_human = np.array([[3.0, 4.0], [0.0, 0.0]])

    mean, sd = ev.demo_effort_baseline([Ep(), Ep()])
    assert mean == 2.5 and sd == 2.5
