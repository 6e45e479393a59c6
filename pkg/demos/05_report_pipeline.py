# End to end through the command line: images, energies, estimates, report.
# Writes into ./demo_run (or the directory given as the first argument).
import json
import sys
from pathlib import Path

import numpy as np

from dimscope.cli import main
from dimscope.io import read_csv, write_ids_csv, write_tensor

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run")
root.mkdir(exist_ok=True)
rng = np.random.default_rng(0)

# 120 fake 16x16 cutouts: a blob whose width grows with the source index
n, h = 120, 16
yy, xx = np.mgrid[:h, :h]
width = np.linspace(1.0, 4.0, n)
imgs = np.stack([30 * np.exp(-((yy - 8) ** 2 + (xx - 8) ** 2) / (2 * w**2)) for w in width])
imgs += rng.normal(size=imgs.shape)
ids = [f"src{i:04d}" for i in range(n)]
write_tensor(root / "images.dimt", imgs)
write_ids_csv(root / "ids.csv", ids)

margin = np.abs(rng.normal(4.0, 1.5, size=(n, 1)))
noise = rng.normal(size=(n, 60, 2))
write_tensor(root / "logits.dimt", np.stack([margin + noise[..., 0], -margin + noise[..., 1]], axis=-1))
(root / "catalog.csv").write_text(
    "id,fr_class,consensus,angular_size\n" + "".join(f"{s},{'FRI' if i % 3 else 'FRII'},0.8,35\n" for i, s in enumerate(ids))
)

steps = [
    ["energy-bin", "--logits", str(root / "logits.dimt"), "--out", str(root / "energy")],
    ["estimate", "--data", str(root / "images.dimt"), "--normalize", "per_sample_minmax",
     "--method", "mle", "--m", "5", "--out", str(root / "mle5")],
    ["estimate", "--data", str(root / "images.dimt"), "--normalize", "per_sample_minmax",
     "--method", "lpca", "--m", "20", "--out", str(root / "lpca")],
    ["report", "--estimates", str(root / "mle5" / "estimates.csv"), "--estimates", str(root / "lpca" / "estimates.csv"),
     "--energy", str(root / "energy" / "energy_records.csv"), "--catalog", str(root / "catalog.csv"),
     "--images", str(root / "images.dimt"), "--border-width", "3", "--out", str(root / "report")],
]
for argv in steps:
    print("dimscope", " ".join(argv[:1]), "->", main(argv))

for row in read_csv(root / "report" / "trends.csv"):
    print("trend %-5s by %-4s rho=%s over %s intervals" % (row["method"], row["by"], row["rho"], row["n_cells"]))
fixture = json.loads((root / "report" / "report.json").read_text())["fixture_trends"]
print("reference-table trends:", [(t["method"], t["by"], t["rho"]) for t in fixture][:4])
print("plots:", sorted(p.name for p in (root / "report").glob("*.svg")))
