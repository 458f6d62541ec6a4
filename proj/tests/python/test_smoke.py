import pytest

import lwpk


def test_summarize_published_cifar_row():
    row = [78.52, 73.09, 70.37, 66.15, 63.94, 61.69, 59.91, 58.00, 55.95]
    m = lwpk.summarize(row)
    assert m["pd"] == pytest.approx(22.57, abs=0.005)
    assert m["acc_avg"] == pytest.approx(65.29, abs=0.005)


def test_partition_scores():
    assert lwpk.ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    acc, flagged = lwpk.clustering_accuracy([0, 0, 0, 1], [0, 0, 1, 1])
    assert acc == 0.75
    assert not flagged
    assert lwpk.sign_test_p_value(5, 0) == pytest.approx(1 / 32)
    assert lwpk.offset_distance(1.0, 0.5, 2.0) == 0.5


def test_run_is_deterministic():
    o = {"rlcc.epochs": "2", "pretrain.epochs": "3", "run.seed": "4"}
    a = lwpk.run(o)
    b = lwpk.run(o)
    assert a["metrics"] == b["metrics"]
    assert len(a["metrics"]["accuracies"]) == 4
    assert "clustering" in a


def test_config_errors_name_the_key():
    with pytest.raises(ValueError, match="rlcc.t1"):
        lwpk.run({"rlcc.t1": "-1"})
    assert "protocol.K = 3" in lwpk.config_text()


def test_label_mismatch_ablation():
    r = lwpk.ablate("label_mismatch", {"rlcc.epochs": "2", "pretrain.epochs": "3"}, seeds=[0, 1])
    assert r["arms"]["aligned"] == r["arms"]["permuted"]
