"""End-to-end experiment runners behind the command-line subcommands.

Each runner takes a resolved config section, the global seed and an output
directory, writes its artifacts there and returns their file names.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import autoencoder as ae
from . import clustering, diagnostics, features, gan, nn, routing, textio
from .medium import (FrequencyGrid, MultipathConfig, NoiseSpec, Impulsive, Narrowband,
                     Stationary, noise_synthesize, random_multipath, tl_transfer,
                     topdown_channel, topo_random)
from .seeding import child_seed

# three synthetic noise environments with distinct level, coupling, tonal and impulsive content
PLANTED_NOISE = (
    NoiseSpec([Stationary(1.0, -20.0)], coupling=0.9),
    NoiseSpec([Stationary(0.5, 0.0), Narrowband(100e3, 3.0)], coupling=0.0),
    NoiseSpec([Stationary(0.3, -20.0), Impulsive(20000.0, 10.0, 5e-6)], coupling=0.5),
)


def planted_noise(seed: int, slots_per_class: int = 40, slot_len: int = 1024,
                  sample_rate: float = 1e6, specs=PLANTED_NOISE):
    """Two traces made of one slot-aligned segment per environment, plus per-slot labels."""
    ch1, ch2, labels = [], [], []
    duration = slots_per_class * slot_len / sample_rate
    for k, spec in enumerate(specs):
        a, b = noise_synthesize(spec, duration, sample_rate, child_seed(seed, f"planted/{k}"),
                                slot_len)
        ch1.append(a.samples[:slots_per_class * slot_len])
        ch2.append(b.samples[:slots_per_class * slot_len])
        labels += [k] * slots_per_class
    return (features.Trace(np.concatenate(ch1), sample_rate),
            features.Trace(np.concatenate(ch2), sample_rate), np.array(labels))


def noise_cluster_experiment(seed: int, slots_per_class: int = 40, slot_len: int = 1024,
                             sample_rate: float = 1e6, som_epochs: int = 50,
                             freq_range=(50e3, 150e3), burg_order: int = 16):
    t1, t2, labels = planted_noise(seed, slots_per_class, slot_len, sample_rate)
    cfg = features.FeatureConfig(slot_len=slot_len, freq_range=tuple(freq_range),
                                 burg_order=burg_order)
    fm = features.feature_matrix(t1, t2, cfg)
    data = features.zscore(fm.values)
    grid, assign, table = clustering.som_scan(data, epochs=som_epochs,
                                              seed=child_seed(seed, "noise/som"))
    return fm, labels, grid, assign, table


def _save_model(path, model):
    nn.save_model(model, path)


def _write(out: Path, name: str, written: list, writer, *args):
    writer(out / name, *args)
    written.append(name)


def run_channel_gen(cfg: dict, seed: int, out: Path) -> list:
    written = []
    grid = FrequencyGrid(cfg["f_start"], cfg["f_stop"], cfg["n_bins"])
    rng = np.random.default_rng(child_seed(seed, "channel-gen"))
    if cfg["source"] == "multipath":
        mp = MultipathConfig(grid=grid)
        params, rows = [], []
        for _ in range(cfg["n_responses"]):
            p = random_multipath(config=mp, rng=rng)
            params.append(p.to_dict())
            rows.append(topdown_channel(p, grid).mag_db())
        _write(out, "params.json", written, textio.write_json, params)
    else:
        rows, links = [], []
        for k in range(cfg["n_responses"]):
            topo = topo_random(cfg["n_nodes"], cfg["area_side"], cfg["avg_edge_len"], rng=rng)
            tx, rx = (int(v) for v in rng.choice(topo.n_nodes, size=2, replace=False))
            rows.append(tl_transfer(topo, tx, rx, grid).mag_db())
            links.append({"index": k, "tx": tx, "rx": rx, "topology": topo.to_dict()})
        _write(out, "topologies.json", written, textio.write_json, links)
    _write(out, "responses_db.csv", written, gan.write_responses_csv, np.array(rows), grid)
    return written


def run_noise_cluster(cfg: dict, seed: int, out: Path) -> list:
    written = []
    fm, labels, grid, assign, table = noise_cluster_experiment(
        seed, cfg["slots_per_class"], cfg["slot_len"], cfg["sample_rate"], cfg["som_epochs"],
        cfg["freq_range"], cfg["burg_order"])
    _write(out, "features.csv", written, fm.to_csv)
    rows = [(i, int(c), int(p)) for i, (c, p) in enumerate(zip(assign, labels))]
    _write(out, "assignments.csv", written, textio.write_csv,
           ["slot_index", "cluster_id", "planted_class"], rows)
    _write(out, "som_scan.csv", written, textio.write_csv,
           ["height", "width", "units_used", "davies_bouldin"], table)
    header, rows = clustering.cluster_summary(fm.values, assign, fm.names)
    _write(out, "clusters.csv", written, textio.write_csv, header, rows)
    fits = {str(int(c)): {name: clustering.fit_distributions(fm.values[assign == c, j])
                          for j, name in enumerate(fm.names)}
            for c in np.unique(assign)}
    summary = {"purity": clustering.purity(assign, labels),
               "grid": [int(grid.height), int(grid.width)],
               "degenerate_slots": int(fm.degenerate.sum()), "fits": fits}
    _write(out, "summary.json", written, textio.write_json, summary)
    return written


def run_gan_train(cfg: dict, seed: int, out: Path) -> list:
    written = []
    corpus = gan.build_corpus(cfg["corpus_size"], seed)
    gcfg = gan.GanConfig(cfg["latent_dim"], tuple(cfg["generator_hidden"]),
                         tuple(cfg["discriminator_hidden"]), cfg["epochs"], cfg["batch_size"],
                         cfg["lr_generator"], cfg["lr_discriminator"], child_seed(seed, "gan"))
    result = gan.gan_train(corpus, gcfg)
    report = gan.evaluate_gan(result.generator, corpus, cfg["n_generate"], seed)
    _write(out, "corpus_db.csv", written, corpus.to_csv)
    _write(out, "generated_db.csv", written, gan.write_responses_csv,
           gan.generate(result.generator, cfg["n_generate"], seed), corpus.grid)
    _write(out, "generator.json", written, textio.write_json,
           {"model": result.generator.model.to_dict(), "lo_db": result.generator.lo,
            "hi_db": result.generator.hi})
    _write(out, "discriminator.json", written, _save_model, result.discriminator)
    _write(out, "history.csv", written, textio.write_csv, ["epoch", "d_loss", "g_loss"],
           result.history)
    _write(out, "report.json", written, textio.write_json,
           {**report.to_dict(), "collapsed": result.collapsed})
    return written


def run_ae_ser(cfg: dict, seed: int, out: Path) -> list:
    written = []
    acfg = ae.AeConfig(m=cfg["m"], n=cfg["n"], encoder_hidden=tuple(cfg["encoder_hidden"]),
                       decoder_hidden=tuple(cfg["decoder_hidden"]),
                       channel=np.array(cfg["channel_taps"]) if cfg["channel_taps"] else None,
                       train_ebn0_db=cfg["train_ebn0_db"], normalization=cfg["normalization"],
                       epochs=cfg["epochs"], steps_per_epoch=cfg["steps_per_epoch"],
                       batch_size=cfg["batch_size"], learning_rate=cfg["learning_rate"],
                       seed=child_seed(seed, "ae"))
    system = ae.ae_train(acfg)
    curve = ae.evaluate_ser(system, cfg["ebn0_db"], cfg["trials"], child_seed(seed, "ae/ser"))
    _write(out, "ser.csv", written, ae.write_ser_csv, curve, cfg["m"])
    _write(out, "constellation.csv", written, ae.write_constellation_csv, system)
    _write(out, "encoder.json", written, _save_model, system.encoder)
    _write(out, "decoder.json", written, _save_model, system.decoder)
    return written


def _bucket_rows(model, contexts, problems, seed, thr):
    rows = []
    for ctx_index, ctx in enumerate(contexts):
        match, total = routing.evaluate_match(model, [ctx], problems, child_seed(seed, ctx_index), thr)
        rows.append((ctx.table.n_nodes, match, total))
    return rows


def run_route_sim(cfg: dict, seed: int, out: Path) -> list:
    written = []
    thr = cfg["min_capacity"]
    link_kw = {"tx_psd_dbm_hz": cfg["tx_psd_dbm_hz"]}
    ds = routing.route_dataset(cfg["n_topologies"], tuple(cfg["node_range"]), seed,
                               cfg["problems_per_topology"], tuple(cfg["area_range"]), thr,
                               tx_psd_dbm_hz=cfg["tx_psd_dbm_hz"])
    rcfg = routing.RouterConfig(tuple(cfg["hidden"]), cfg["dropout_rate"], cfg["epochs"],
                                cfg["batch_size"], cfg["learning_rate"], child_seed(seed, "router"))
    router = routing.nn_route_train(ds, rcfg)
    _write(out, "dataset.csv", written, routing.write_route_dataset_csv, ds)
    _write(out, "count_model.json", written, _save_model, router.count_model)
    _write(out, "step_model.json", written, _save_model, router.step_model)

    ranges = [("in", tuple(cfg["node_range"]))] + [("out", tuple(r)) for r in cfg["out_node_ranges"]]
    acc_rows, bucket_rows, test_sets = [], [], {}
    for k, (kind, node_range) in enumerate(ranges):
        n_topo = cfg["test_topologies"] if kind == "in" else cfg["out_topologies"]
        contexts = routing.make_contexts(n_topo, node_range, child_seed(seed, f"route/test/{k}"),
                                         tuple(cfg["area_range"]), **link_kw)
        test_sets[k] = contexts
        match, total = routing.evaluate_match(router, contexts, cfg["problems_per_topology"],
                                              child_seed(seed, f"route/match/{k}"), thr)
        acc_rows.append((kind, node_range[0], node_range[1], match, total))
        bucket_rows += [(kind, *row) for row in _bucket_rows(
            router, contexts, cfg["problems_per_topology"], child_seed(seed, f"route/bucket/{k}"), thr)]
    _write(out, "accuracy.csv", written, textio.write_csv,
           ["split", "node_lo", "node_hi", "match", "problems"], acc_rows)
    _write(out, "accuracy_by_size.csv", written, textio.write_csv,
           ["split", "n_nodes", "match", "problems"], bucket_rows)

    size_rows = []
    for frac in cfg["training_fractions"]:
        n_rec = max(1, int(round(frac * len(ds.records))))
        sub_router = router if n_rec == len(ds.records) else routing.nn_route_train(ds.subset(n_rec), rcfg)
        match, total = routing.evaluate_match(sub_router, test_sets[0], cfg["problems_per_topology"],
                                              child_seed(seed, "route/match/0"), thr)
        size_rows.append((n_rec, match, total))
    _write(out, "training_size.csv", written, textio.write_csv,
           ["training_problems", "match", "problems"], size_rows)

    gain_rows = routing.eval_capacity_gain(router, test_sets[0], cfg["problems_per_topology"],
                                           child_seed(seed, "route/gain"), thr)
    _write(out, "gain.csv", written, textio.write_csv,
           ["density_km2", "gain_nn", "gain_optimal"], gain_rows)
    samples = routing.capacity_samples(ds.contexts, seed=child_seed(seed, "route/capacity"))
    header, rows = routing.capacity_regression(samples).rows()
    _write(out, "capacity_surface.csv", written, textio.write_csv, header, rows)
    return written


def run_diagnose(cfg: dict, seed: int, out: Path) -> list:
    written = []
    dcfg = diagnostics.DiagConfig(n_nodes=cfg["n_nodes"], avg_edge_len=cfg["avg_edge_len"],
                                  n_realizations=cfg["n_realizations"], signal=cfg["signal"],
                                  load_mode=cfg["load_mode"], classes=tuple(cfg["classes"]),
                                  train_fraction=cfg["train_fraction"], seed=seed)
    ds = diagnostics.build_diag_dataset(dcfg)
    settings = diagnostics.TrainSettings(cfg["epochs"], cfg["batch_size"], cfg["learning_rate"])
    model, _, test_idx = diagnostics.train_diag(ds, cfg["classifier"], seed, cfg["train_fraction"],
                                                settings)
    full = diagnostics.evaluate_diag(model, ds, test_idx)
    _write(out, "dataset.csv", written, ds.to_csv)
    _write(out, "confusion.csv", written, diagnostics.write_confusion_csv, full)
    subset = None
    present = set(int(c) for c in cfg["classes"])
    wanted = [c for c in cfg["subset_classes"] if c in present]
    if len(wanted) >= 2 and set(wanted) != present:
        subset = diagnostics.class_subset_experiment(ds, wanted, cfg["classifier"], seed,
                                                     cfg["train_fraction"], settings)
        _write(out, "confusion_subset.csv", written, diagnostics.write_confusion_csv, subset)
    summary = {"table": diagnostics.table_row(cfg["load_mode"], full, subset),
               "full": full.to_dict(), "subset": subset.to_dict() if subset else None,
               "observation_node": ds.observation_node, "resampled": ds.resampled}
    _write(out, "summary.json", written, textio.write_json, summary)
    return written


RUNNERS = {
    "channel-gen": ("channel", run_channel_gen),
    "noise-cluster": ("noise-cluster", run_noise_cluster),
    "gan-train": ("gan", run_gan_train),
    "ae-ser": ("ae-ser", run_ae_ser),
    "route-sim": ("route", run_route_sim),
    "diagnose": ("diagnose", run_diagnose),
}
