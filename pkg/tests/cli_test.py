from __future__ import print_function, division, absolute_import

import pytest

from recist2vol.cli import main
from recist2vol.learner import load_model
from recist2vol.metrics import read_metrics_csv, SLICE, VOLUME

from . import SEED


@pytest.fixture(scope="module")
def suite(tmpdir_factory):
    out_dir = tmpdir_factory.mktemp("phantoms")
    assert main(["phantom-gen", "--n", "3", "--seed", str(SEED),
                 "--out", str(out_dir)]) == 0
    return out_dir


class MainTest(object):

    @staticmethod
    def run_main(*args):
        return main([str(p) for p in args if p])

    def test_missing_annotation(self, tmpdir):
        assert self.run_main("segment-slice", "--out", tmpdir) == 2

    def test_no_command(self):
        assert self.run_main() == 2

    def test_phantom_gen_is_deterministic(self, tmpdir):
        for name in ("a", "b"):
            assert self.run_main("phantom-gen", "--n", 2, "--seed", SEED,
                                 "--out", tmpdir / name) == 0
        assert ((tmpdir / "a" / "train.csv").read() ==
                (tmpdir / "b" / "train.csv").read())
        assert ((tmpdir / "a" / "ph000.raw").read_binary() ==
                (tmpdir / "b" / "ph000.raw").read_binary())

    @pytest.mark.parametrize("method", ["recist-d", "grabcut-r"])
    def test_segment_slice_and_evaluate(self, suite, tmpdir, method):
        pred_dir = tmpdir / "pred"
        annotation = suite / "test.csv"
        assert self.run_main("segment-slice", "--annotation", annotation,
                             "--method", method, "--out", pred_dir) == 0
        assert (pred_dir / "seg_ph002.raw").check(file=1)

        out = tmpdir / "metrics.csv"
        summary = tmpdir / "summary.csv"
        assert self.run_main("evaluate", "--annotation", annotation,
                             "--pred-dir", pred_dir, "--scope", "both",
                             "--out", out, "--summary", summary) == 0
        records = read_metrics_csv(str(out))
        assert [r.scope for r in records] == [SLICE, VOLUME]
        assert records[0].dice > 0.2
        # a single predicted slice misses most of the lesion volume
        assert records[1].recall < records[0].recall
        assert (tmpdir / "summary_slice.csv").check(file=1)
        assert (tmpdir / "summary_volume.csv").check(file=1)

    def test_grabcut_3de(self, suite, tmpdir):
        pred_dir = tmpdir / "pred"
        annotation = suite / "test.csv"
        assert self.run_main("grabcut-3de", "--annotation", annotation,
                             "--out", pred_dir) == 0
        out = tmpdir / "metrics.csv"
        assert self.run_main("evaluate", "--annotation", annotation,
                             "--pred-dir", pred_dir, "--out", out) == 0
        records = read_metrics_csv(str(out))
        assert len(records) == 1
        assert records[0].scope == VOLUME
        assert records[0].dice > 0.4

    def test_train_segment_and_curves(self, suite, tmpdir):
        model_path = tmpdir / "model.bin"
        assert self.run_main("train", "--annotation", suite / "train.csv",
                             "--k-slices", 1, "--epochs", 1,
                             "--labels", "recist-d",
                             "--out", model_path) == 0
        load_model(str(model_path))

        annotation = suite / "test.csv"
        pred_dir = tmpdir / "pred"
        assert self.run_main("segment-volume", "--annotation", annotation,
                             "--model", model_path, "--out", pred_dir) == 0
        assert (pred_dir / "seg_ph002.raw").check(file=1)

        pr_path = tmpdir / "pr.csv"
        assert self.run_main("pr-curve", "--annotation", annotation,
                             "--model", model_path, "--n-thresholds", 11,
                             "--out", pr_path) == 0
        lines = pr_path.read().splitlines()
        assert lines[0] == "threshold,precision,recall"
        assert len(lines) == 12

        offsets = tmpdir / "offsets.csv"
        assert self.run_main("offset-curve", "--annotation", annotation,
                             "--method", "model", "--model", model_path,
                             "--out", offsets) == 0
        assert offsets.read().startswith("offset,mean,std_pop,count\n")

    def test_offset_curve_needs_model(self, suite, tmpdir):
        assert self.run_main("offset-curve", "--annotation",
                             suite / "test.csv", "--method", "model",
                             "--out", tmpdir / "o.csv") == 1

    def test_evaluate_without_predictions(self, suite, tmpdir):
        assert self.run_main("evaluate", "--annotation", suite / "test.csv",
                             "--pred-dir", tmpdir / "missing",
                             "--out", tmpdir / "m.csv") == 1

    def test_multiprocessing(self, suite, tmpdir):
        assert self.run_main("segment-slice", "--annotation",
                             suite / "train.csv", "--method", "recist-d",
                             "-j", 2, "--out", tmpdir / "pred") == 0
        assert (tmpdir / "pred" / "seg_ph001.raw").check(file=1)

    def test_pipeline_is_reproducible(self, tmpdir):
        outputs = []
        for name in ("a", "b"):
            root = tmpdir / name
            assert self.run_main("phantom-gen", "--n", 3, "--seed", SEED,
                                 "--out", root / "suite") == 0
            model_path = root / "model.bin"
            assert self.run_main("train", "--annotation",
                                 root / "suite" / "train.csv",
                                 "--k-slices", 3, "--epochs", 1,
                                 "--seed", SEED, "--out", model_path) == 0
            annotation = root / "suite" / "test.csv"
            assert self.run_main("segment-volume", "--annotation",
                                 annotation, "--model", model_path,
                                 "--refine", "--out", root / "pred") == 0
            metrics = root / "metrics.csv"
            assert self.run_main("evaluate", "--annotation", annotation,
                                 "--pred-dir", root / "pred",
                                 "--out", metrics) == 0
            outputs.append(metrics.read_binary())
        assert outputs[0] == outputs[1]
