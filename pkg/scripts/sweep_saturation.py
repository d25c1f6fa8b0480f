"""Accuracy of the reference regressor as the fabric saturates earlier or later.

Trains `ref` once per (saturation pressure, noise level) pair and appends one
row per run to `saturation_results.csv`, which `plots/saturation` reads.
"""
from __future__ import annotations

import concurrent.futures
import contextlib
import dataclasses
import itertools
import logging
import os
import threading
import time
from collections.abc import Iterable

import polars as pl
import tqdm

import etexshape

logger = logging.getLogger(__name__)

SAT_PRESSURES = (3_000.0, 5_000.0, 7_000.0, 9_000.0)
NOISE_SIGMAS = (0.0, 0.005, 0.02)
EPOCHS = 200

results_file_lock = threading.Lock()


@dataclasses.dataclass
class Result:
    sat_pressure: float
    noise_sigma: float
    epochs: int
    train_mse: float
    val_mse: float
    test_mse: float
    rmse_kappa: float
    rmse_phi: float
    rmse_phi_identifiable: float
    n_distinct_frames: int
    seconds: float


def append_to_csv(csv_name: str, results: Result | Iterable[Result]) -> None:
    if not isinstance(results, Iterable):
        results = [results]
    new = pl.DataFrame([dataclasses.asdict(result) for result in results])
    if new.is_empty():
        return
    # use lock to accommodate multi-threading
    with results_file_lock:
        try:
            df = pl.concat([pl.read_csv(csv_name), new], how="vertical_relaxed")
        except FileNotFoundError:
            df = new
        df.write_csv(csv_name)


def helper(sat_pressure: float, noise_sigma: float, epochs: int = EPOCHS) -> Result:
    t0 = time.time()
    sensor = etexshape.SensorModelConfig(sat_pressure=sat_pressure, noise_sigma=noise_sigma)
    dataset = etexshape.with_normalization(etexshape.split(etexshape.generate(config=sensor), seed=0))
    model, history = etexshape.train(
        etexshape.ARCHITECTURES["ref"], dataset, etexshape.TrainConfig(epochs=epochs)
    )
    report = etexshape.evaluate(model, dataset)
    return Result(
        sat_pressure=sat_pressure,
        noise_sigma=noise_sigma,
        epochs=epochs,
        train_mse=history.train_mse[-1],
        val_mse=history.val_mse[-1],
        test_mse=report.mse,
        rmse_kappa=report.rmse_kappa,
        rmse_phi=report.rmse_phi,
        rmse_phi_identifiable=report.rmse_phi_identifiable,
        # how much of the grid the sensor can tell apart at all
        n_distinct_frames=len({counts.tobytes() for counts in dataset.counts}),
        seconds=time.time() - t0,
    )


def save_results(csv_name: str, use_threadpool: bool = True) -> None:
    with contextlib.suppress(FileNotFoundError):
        os.unlink(csv_name)
    jobs = list(itertools.product(SAT_PRESSURES, NOISE_SIGMAS))
    tqdm_kwargs = dict(total=len(jobs), desc="saturation sweep", unit="run", ncols=80)
    if use_threadpool:
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
            futures = [pool.submit(helper, *job) for job in jobs]
            for future in tqdm.tqdm(concurrent.futures.as_completed(futures), **tqdm_kwargs):
                append_to_csv(csv_name, future.result())
    else:
        for job in tqdm.tqdm(jobs, **tqdm_kwargs):
            append_to_csv(csv_name, helper(*job))


def main() -> None:
    t0 = time.time()
    save_results(csv_name="saturation_results.csv")
    logging.info(f"Total time: {time.time() - t0:.2f} seconds")


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    main()
