"""Shared fixtures: small hand-written CSVs in the runner's formats."""

import pytest

METRICS_HEADER = "algo,seed,wall_ms,samples,round,train_loss,grad_norm_sq,flops,p_hat"


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def metrics_two_seeds(tmp_path):
    """One algorithm, two seeds, deliberately misaligned eval moments."""
    return write(
        tmp_path / "metrics.csv",
        METRICS_HEADER + "\n"
        "mb_sgd,1,0.0,0,0,2.0,1.0,0,1.0\n"
        "mb_sgd,1,4.0,10,10,1.0,0.5,100,1.0\n"
        "mb_sgd,1,8.0,20,20,0.5,0.25,200,1.0\n"
        "mb_sgd,2,0.0,0,0,2.2,1.1,0,1.0\n"
        "mb_sgd,2,5.0,11,11,0.9,0.4,110,1.0\n"
        "mb_sgd,2,9.0,21,21,0.4,0.2,210,1.0\n",
    )


@pytest.fixture
def metrics_one_seed(tmp_path):
    return write(
        tmp_path / "metrics_single.csv",
        METRICS_HEADER + "\n"
        "lap_sgd,1,0.0,0,0,2.0,1.0,0,1.0\n"
        "lap_sgd,1,4.0,10,3,1.0,0.5,100,0.9\n",
    )


@pytest.fixture
def rate_csv(tmp_path):
    return write(
        tmp_path / "rate.csv",
        "rounds,stat\n250,0.04\n500,0.021\n1000,0.0099\n2000,0.005\n",
    )


@pytest.fixture
def consistency_csv(tmp_path):
    return write(
        tmp_path / "consistency.csv",
        "alpha,mean_dist,mean_dist_sq,bound,n_clean\n"
        "0.01,0.001,1e-06,0.01,500\n"
        "0.02,0.004,1.6e-05,0.04,500\n"
        "0.04,0.016,0.00026,0.16,500\n",
    )


@pytest.fixture
def delay_csv(tmp_path):
    return write(
        tmp_path / "delay.csv",
        "t,total,clean,p_hat\n0,100,90,0.9\n1,100,70,0.7\n2,50,20,0.4\n",
    )
