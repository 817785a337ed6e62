"""
Anticipating anomalies end to end
=================================

The whole chain through the command line: synthesise, train, fit the
detector, score test windows and evaluate. Level shifts sit in the test
part, so every alarm is raised before the shift is observed.
"""

# %%
import pathlib
import tempfile

from anticipator.cli import main

work = pathlib.Path(tempfile.mkdtemp(prefix="anticipator-demo-"))
cfg = work / "run.cfg"
cfg.write_text("""\
synth.m = 2
synth.length = 800
synth.noise = 0.2
synth.anomaly_types = level_shift
synth.anomaly_ratio = 0.015
synth.span_min = 4
synth.span_max = 4
synth.region_start = 0.72
synth.region_end = 0.97
window.detector_stride = 2
diffusion.epochs = 10
diffusion.batches_per_epoch = 20
diffusion.batch_size = 64
diffusion.learning_rate = 1e-3
diffusion.num_samples = 8
diffusion.detector_num_samples = 4
""")


def run(*argv):
    code = main([str(a) for a in argv] + ["--config", str(cfg)])
    assert code == 0, argv


# %%
run("synth", "--out", work / "data.csv")
run("train", "--data", work / "data.csv", "--out", work / "model.ckpt")
run("fit-detector", "--data", work / "data.csv", "--checkpoint", work / "model.ckpt",
    "--out", work / "forest.bin", "--mask", work / "features.mask")

# %%
run("anticipate", "--data", work / "data.csv", "--checkpoint", work / "model.ckpt",
    "--forest", work / "forest.bin", "--mask", work / "features.mask", "--out", work / "results.csv")
run("evaluate", "--data", work / "data.csv", "--results", work / "results.csv", "--out", work / "report.txt")
print("artifacts in", work)
