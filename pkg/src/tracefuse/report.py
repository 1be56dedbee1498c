"""Render fusion outcomes and risk tables to delimited files and figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def distributions_table(record: dict) -> str:
    lines = ["answer\tp_breadth\tp_depth\tp_fused\tp_calibrated"]
    calibrated = record.get("p_calibrated") or {"probs": {}}
    answers = sorted(calibrated["probs"])
    for answer in answers:
        cells = [answer]
        for stage in ("p_breadth", "p_depth", "p_fused", "p_calibrated"):
            dist = record.get(stage)
            cells.append(repr(dist["probs"][answer]) if dist else "")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def chain_table(record: dict) -> str:
    lines = ["position\tchannel\tsrc\trelation\tdst\tdelta"]
    for position, edge in enumerate(record.get("chain", [])):
        lines.append(
            "\t".join(
                [
                    str(position),
                    edge["channel"],
                    edge["src"],
                    edge["relation"],
                    edge["dst"],
                    repr(edge["delta"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_distribution_figure(record: dict, path: Path) -> None:
    calibrated = record.get("p_calibrated") or {"probs": {}}
    answers = sorted(calibrated["probs"])
    stages = [
        ("p_breadth", "breadth"),
        ("p_depth", "depth"),
        ("p_fused", "fused"),
        ("p_calibrated", "calibrated"),
    ]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(answers)), 3.2))
    width = 0.8 / len(stages)
    for offset, (stage, label) in enumerate(stages):
        dist = record.get(stage)
        if not dist:
            continue
        xs = [i + offset * width for i in range(len(answers))]
        ax.bar(xs, [dist["probs"][a] for a in answers], width=width, label=label)
    ax.set_xticks([i + 1.5 * width for i in range(len(answers))])
    ax.set_xticklabels(answers, rotation=20, ha="right")
    ax.set_ylabel("probability")
    ax.set_ylim(0.0, 1.0)
    title = record.get("map_answer")
    ax.set_title(f"answer distributions (map: {title})")
    ax.legend(fontsize=8)
    _save(fig, path)


def render_chain_figure(record: dict, path: Path) -> None:
    chain = record.get("chain", [])
    labels = [f"{e['src']} -{e['relation']}-> {e['dst']}" for e in chain]
    deltas = [e["delta"] for e in chain]
    fig, ax = plt.subplots(figsize=(6.0, max(2.0, 0.4 * len(chain) + 1.0)))
    ys = range(len(chain))
    ax.barh(list(ys), deltas)
    ax.set_yticks(list(ys))
    ax.set_yticklabels(labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("leave-one-out drop in map probability")
    ax.set_title("minimal evidence chain")
    _save(fig, path)


def render_risk_figure(tsv_text: str, path: Path) -> None:
    lines = [line for line in tsv_text.splitlines() if line.strip()]
    header = lines[0].split("\t")
    rows = [line.split("\t") for line in lines[1:]]
    idx = {name: i for i, name in enumerate(header)}
    metrics = ["risk_breadth", "risk_depth", "risk_fused", "risk_oracle"]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(rows)), 3.2))
    width = 0.8 / len(metrics)
    for offset, metric in enumerate(metrics):
        xs = [i + offset * width for i in range(len(rows))]
        ax.bar(xs, [float(row[idx[metric]]) for row in rows], width=width, label=metric)
    ax.set_xticks([i + 1.5 * width for i in range(len(rows))])
    ax.set_xticklabels(
        [f"n={row[idx['answer_count']]} cal={row[idx['calibrated']]}" for row in rows],
        rotation=20,
        ha="right",
        fontsize=7,
    )
    ax.set_ylabel("expected log-loss")
    ax.set_title("channel, fused and oracle risks")
    ax.legend(fontsize=8)
    _save(fig, path)


def write_outcome_report(record: dict, out_dir: Path, stem: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    dist_tsv = out_dir / f"{stem}.distributions.tsv"
    dist_tsv.write_text(distributions_table(record), encoding="utf-8")
    written.append(dist_tsv)
    chain_tsv = out_dir / f"{stem}.chain.tsv"
    chain_tsv.write_text(chain_table(record), encoding="utf-8")
    written.append(chain_tsv)
    if not record.get("abstained"):
        dist_png = out_dir / f"{stem}.distributions.png"
        render_distribution_figure(record, dist_png)
        written.append(dist_png)
        chain_png = out_dir / f"{stem}.chain.png"
        render_chain_figure(record, chain_png)
        written.append(chain_png)
    return written


def write_risk_report(tsv_text: str, out_dir: Path, stem: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / f"{stem}.risks.png"
    render_risk_figure(tsv_text, png)
    return [png]
