from datetime import date

import numpy as np
import pytest

from sentilevy import cli, io
from sentilevy.config import RunConfig
from sentilevy.model import MemoryParams, ModelParams, SentimentDay, transition_points
from sentilevy.optimizer import JumpSet, detect_jumps, objective_u, precision

START = date(2013, 2, 4)
DATES = io.business_days(START, 300)


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "-o", out, "-s", "sim_days=300", "-s", "seed=3",
               "-s", "sim_spike_prob=0.05") == 0
    return out


def config(tmp_path, dataset, **extra):
    lines = {"prices": dataset / "prices.csv", "sentiment": dataset / "sentiment.csv",
             "train_end": DATES[199], "test_start": DATES[200], "coef_err": 0.3,
             "output_dir": tmp_path / "out"}
    lines.update(extra)
    path = tmp_path / "run.cfg"
    path.write_text("".join(f"{k}={v}\n" for k, v in lines.items()))
    return path


class TestSimulate:
    def test_files_and_shapes(self, dataset):
        prices = io.load_prices(dataset / "prices.csv")
        assert len(prices) == 300 and prices.dates == DATES
        sent = io.load_sentiment(dataset / "sentiment.csv", dates=prices.dates)
        assert sent.filled == 0
        truth = io.load_truth(dataset / "truth.csv")
        assert truth["date"] == DATES

    def test_same_seed_same_files(self, dataset, tmp_path):
        assert run("simulate", "-o", tmp_path, "-s", "sim_days=300", "-s", "seed=3",
                   "-s", "sim_spike_prob=0.05") == 0
        for name in ("prices.csv", "sentiment.csv", "truth.csv"):
            assert (tmp_path / name).read_bytes() == (dataset / name).read_bytes()

    def test_truth_replays_through_transition(self, dataset):
        cfg = RunConfig()
        p = ModelParams(mu=cfg.sim_mu, sigma=cfg.sim_sigma, phi=cfg.sim_phi,
                        mem_idio=MemoryParams(cfg.sim_p_idio), mem_macro=MemoryParams(cfg.sim_p_macro))
        truth = io.load_truth(dataset / "truth.csv")
        sent = io.load_sentiment(dataset / "sentiment.csv").days
        r = io.load_prices(dataset / "prices.csv").returns
        c = cfg.sim_c_idio
        for t in range(1, 300):
            prev = np.array([[0.0, truth["kappa"][t - 1], truth["eta"][t - 1],
                              truth["eta_idio"][t - 1], truth["eta_macro"][t - 1]]])
            nxt = transition_points(prev, sent[t].s_idio, sent[t].s_macro, c, 1 - c, p)[0]
            assert nxt[1] + truth["eps"][t] == pytest.approx(truth["kappa"][t], abs=1e-12)
            assert nxt[2] == pytest.approx(truth["eta"][t], abs=1e-15)
            assert nxt[0] + truth["z"][t] == pytest.approx(r[t - 1], abs=1e-12)

    def test_levy_jump_count(self, tmp_path):
        assert run("simulate", "-o", tmp_path, "-s", "sim_model=levy", "-s", "sim_days=2001",
                   "-s", "sim_sigma=0.01") == 0
        r = io.load_prices(tmp_path / "prices.csv").returns
        k = len(detect_jumps(r, RunConfig().sim_mu, 0.01))
        assert k <= 126  # binomial(2000, 0.05) 99th percentile
        assert not (tmp_path / "truth.csv").exists()

    def test_unknown_model(self, tmp_path):
        assert run("simulate", "-o", tmp_path, "-s", "sim_model=garch") == 1


class TestPipeline:
    def test_train_predict_evaluate(self, dataset, tmp_path):
        cfg = config(tmp_path, dataset)
        assert run("train", "-c", cfg) == 0
        out = tmp_path / "out"
        kv = io.read_keyvalue(out / "params.txt")
        assert kv["train_days"] == "200" and kv["lattice_points"] == "27"
        assert kv["prices_sha256"] == io.file_digest(dataset / "prices.csv")
        surface = (out / "surface.csv").read_text().splitlines()
        assert surface[0] == "p_idio,p_macro,phi,objective,precision" and len(surface) == 28

        assert run("predict", "-c", cfg) == 0
        rows = io.load_predictions(out / "predictions.csv")
        assert len(rows) == 100
        assert rows[0].date == DATES[200] and rows[-1].date == DATES[-1]
        assert (out / "predictions.csv").read_text().splitlines()[0] == ",".join(io.PREDICTION_HEADER)

        # flags agree with the detector applied to the stored columns
        mu, sigma = float(kv["mu"]), float(kv["sigma"])
        days = [r.day_index for r in rows]
        for col, flag in (("r_pred", "jump_pred"), ("r_actual", "jump_actual")):
            js = detect_jumps([getattr(r, col) for r in rows], mu, sigma, days)
            assert [js.sign(d) for d in days] == [getattr(r, flag) for r in rows]

        assert run("evaluate", "-c", cfg) == 0
        metrics = io.read_keyvalue(out / "metrics.txt")
        pred = JumpSet([r.day_index for r in rows if r.jump_pred > 0],
                       [r.day_index for r in rows if r.jump_pred < 0])
        act = JumpSet([r.day_index for r in rows if r.jump_actual > 0],
                      [r.day_index for r in rows if r.jump_actual < 0])
        assert float(metrics["precision"]) == precision(pred, act)
        assert float(metrics["objective"]) == objective_u(pred, act, len(rows))
        plot = (out / "plot_data.csv").read_text().splitlines()
        assert plot[0] == "date,r_actual,r_pred,eta_lag" and len(plot) == 101

    def test_byte_identical_reruns(self, dataset, tmp_path):
        outputs = []
        for k in range(2):
            base = tmp_path / f"run{k}"
            base.mkdir()
            cfg = config(base, dataset)
            assert run("train", "-c", cfg) == 0
            assert run("predict", "-c", cfg) == 0
            outputs.append({name: (base / "out" / name).read_bytes()
                            for name in ("params.txt", "surface.csv", "predictions.csv",
                                         "predict_summary.txt")})
        assert outputs[0] == outputs[1]

    def test_zero_sentiment_test_window(self, dataset, tmp_path):
        sent = io.load_sentiment(dataset / "sentiment.csv").days
        silent = [s if i < 200 else SentimentDay(i) for i, s in enumerate(sent)]
        io.write_sentiment(tmp_path / "s.csv", DATES, silent)
        cfg = config(tmp_path, dataset, sentiment=tmp_path / "s.csv")
        assert run("train", "-c", cfg) == 0
        assert run("predict", "-c", cfg) == 0
        rows = io.load_predictions(tmp_path / "out" / "predictions.csv")
        kv = io.read_keyvalue(tmp_path / "out" / "params.txt")
        sigma = float(kv["sigma"])
        assert all(r.jump_pred == 0 for r in rows)
        drift = float(kv["mu"]) - float(kv["nu"])
        assert max(abs(r.r_pred - drift) for r in rows[5:]) < 0.25 * sigma


class TestEvaluate:
    def write(self, tmp_path, rows):
        io.write_predictions(tmp_path / "p.csv", rows)
        return cli.cmd_evaluate(RunConfig(predictions_file=str(tmp_path / "p.csv"),
                                          output_dir=str(tmp_path / "e")))

    def test_perfect_file(self, tmp_path):
        flags = [1, 0, -1, 0]
        rows = [io.PredictionRow(i + 1, DATES[i], 0.0, 0.0, 0.0, f, f) for i, f in enumerate(flags)]
        m = self.write(tmp_path, rows)
        assert m["precision"] == 1.0 and m["objective"] == pytest.approx(2 / 4)
        table = (tmp_path / "e" / "jump_table.csv").read_text().splitlines()
        assert table[1].endswith(",hit") and len(table) == 3

    def test_no_jumps(self, tmp_path):
        rows = [io.PredictionRow(i + 1, DATES[i], 0.0, 0.0, 0.0, 0, 0) for i in range(3)]
        m = self.write(tmp_path, rows)
        assert (m["precision"], m["objective"], m["empty_prediction"]) == (0.0, 0.0, 1)

    def test_outcomes(self, tmp_path):
        rows = [io.PredictionRow(1, DATES[0], 0, 0, 0, 1, -1), io.PredictionRow(2, DATES[1], 0, 0, 0, 0, 1),
                io.PredictionRow(3, DATES[2], 0, 0, 0, -1, 0)]
        self.write(tmp_path, rows)
        table = (tmp_path / "e" / "jump_table.csv").read_text().splitlines()[1:]
        assert [line.rsplit(",", 1)[1] for line in table] == ["wrong_sign", "miss", "false_alarm"]


class TestExitCodes:
    def test_missing_prices(self, tmp_path):
        assert run("train", "-s", f"prices={tmp_path / 'none.csv'}", "-s",
                   f"sentiment={tmp_path / 'none.csv'}") == 1

    def test_malformed_predictions(self, tmp_path):
        (tmp_path / "p.csv").write_text("bad header\n")
        assert run("evaluate", "-s", f"predictions_file={tmp_path / 'p.csv'}", "-o", tmp_path) == 1

    def test_bad_override(self):
        assert run("simulate", "-s", "novalue") == 1

    def test_optimization_failure(self, dataset, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise cli.OptimizationError("all lattice points failed")

        monkeypatch.setattr(cli, "grid_search", boom)
        assert run("train", "-c", config(tmp_path, dataset)) == 2

    def test_missing_params_file(self, dataset, tmp_path):
        assert run("predict", "-c", config(tmp_path, dataset)) == 1
