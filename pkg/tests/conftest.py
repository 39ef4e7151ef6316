import json
from dataclasses import replace

import pytest

from shmkit import pipeline


def desk_config(out_dir, **data_kw):
    """A minutes-scale pipeline configuration shared by integration tests."""
    data_args = dict(
        crack_lengths_mm=(0.0, 5.0, 12.0),
        crack_rows=(7.0, 5.5, 8.5),
        train_frames=150,
        test_frames=50,
        samples_per_cycle=50,
    )
    data_args.update(data_kw)
    cfg = pipeline.PipelineConfig(
        out_dir=str(out_dir),
        data=pipeline.DataConfig(**data_args),
        pca=pipeline.PcaConfig(k=6),
        pretrain=replace(pipeline.PretrainConfig(), epochs=40, batch_size=32),
        hmc=replace(pipeline.HmcSection(), burn_in=30, n_samples=30,
                    leapfrog_steps=8),
        study=pipeline.StudyConfig(sizes=(60, 120), test_specimen="c12",
                                   hmc_n_samples=15, hmc_burn_in=25),
    )
    return cfg


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """One fully-built small pipeline: data, basis, model, ensemble."""
    out = tmp_path_factory.mktemp("small_run")
    cfg = desk_config(out)
    pipeline.run_gen_data(cfg)
    pipeline.run_fit_pca(cfg)
    pipeline.run_pretrain(cfg)
    pipeline.run_sample(cfg)
    return cfg
