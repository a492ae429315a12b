#!/usr/bin/env python3
import json
from pathlib import Path

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

sns.set_style("whitegrid")
plt.rcParams['figure.figsize'] = (10, 6)
plt.rcParams['font.size'] = 10

RESULTS_DIR = Path('results/raw')
PLOTS_DIR = Path('results/plots')


def load_latest_summary():
    summary_files = sorted(RESULTS_DIR.glob('summary_*.json'))
    if not summary_files:
        raise FileNotFoundError("No summary files found")

    latest = summary_files[-1]
    print(f"Loading: {latest}")

    with open(latest) as f:
        return json.load(f)


def _outputs(summary, subcommand):
    for r in summary['results']:
        if r.get('subcommand') == subcommand and r.get('exit_code') == 0:
            yield r['experiment'], Path(r['out'])


def _save(fig, name):
    fig.tight_layout()
    fig.savefig(PLOTS_DIR / f'{name}.png', dpi=300)
    fig.savefig(PLOTS_DIR / f'{name}.pdf')
    print(f"  Saved: {PLOTS_DIR / f'{name}.png'}")
    plt.close(fig)


def plot_gap_scans(summary):
    for name, out in _outputs(summary, 'gap-scan'):
        print(f"\n>>> Gap scan: {name}")
        df = pd.read_csv(out / 'gap-scan.csv')
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(14, 5))
        sns.lineplot(data=df, x='lambda', y='gap', hue='N', marker='o', palette='viridis', ax=ax1)
        if df['oracle_gap'].notna().any():
            for n, g in df.groupby('N'):
                ax1.plot(g['lambda'], g['oracle_gap'], 'k:', linewidth=0.8)
        ax1.set_yscale('log')
        ax1.set_xlabel('λ', fontsize=12, fontweight='bold')
        ax1.set_ylabel('E₁ − E₀', fontsize=12, fontweight='bold')
        ax1.set_title('Spectral gap', fontsize=14, fontweight='bold')

        sns.lineplot(data=df, x='lambda', y='bulk_gap', hue='N', marker='s', palette='viridis', ax=ax2)
        ax2.set_xlabel('λ', fontsize=12, fontweight='bold')
        ax2.set_ylabel('gap above cluster', fontsize=12, fontweight='bold')
        ax2.set_title('Gap above the low-lying cluster', fontsize=14, fontweight='bold')
        _save(fig, f'{name}_gap')


def plot_lr_cones(summary):
    for name, out in _outputs(summary, 'lr-cone'):
        print(f"\n>>> Lieb-Robinson cone: {name}")
        df = pd.read_csv(out / 'lr-cone.csv')
        pivot = df.pivot_table(index='d', columns='t', values='c')
        fig, ax = plt.subplots(figsize=(12, 5))
        sns.heatmap(np.log10(pivot.clip(lower=1e-16)), cmap='magma', ax=ax,
                    cbar_kws={'label': 'log₁₀ ‖[A, τₜ(B)]‖'})
        ax.set_xticklabels([f'{float(t.get_text()):.2g}' for t in ax.get_xticklabels()], rotation=45)
        ax.set_xlabel('t', fontsize=12, fontweight='bold')
        ax.set_ylabel('d', fontsize=12, fontweight='bold')
        ax.set_title('Commutator light cone', fontsize=14, fontweight='bold')
        _save(fig, f'{name}_cone')

        with open(out / 'lr-cone.json') as f:
            fit = json.load(f).get('fit')
        if fit:
            print(f"  v={fit['v']:.4g}  mu={fit['mu']:.4g}  residual={fit['residual']:.3g}")


def plot_decay_profiles(summary):
    frames = []
    for sub, col in (('locality', 'delta'), ('decompose', 'norm')):
        for name, out in _outputs(summary, sub):
            df = pd.read_csv(out / f'{sub}.csv').rename(columns={col: 'value'})
            df['experiment'] = name
            frames.append(df)
    if not frames:
        print("  Skipping: no locality or decompose results")
        return
    print("\n>>> Quasi-locality profiles")
    df = pd.concat(frames, ignore_index=True)
    df = df[df['value'] > 0]
    fig, ax = plt.subplots()
    sns.lineplot(data=df, x='r', y='value', hue='experiment', marker='o', ax=ax)
    ax.set_yscale('log')
    ax.set_xlabel('radius r', fontsize=12, fontweight='bold')
    ax.set_ylabel('tail norm', fontsize=12, fontweight='bold')
    ax.set_title('Decay of the flow outside balls', fontsize=14, fontweight='bold')
    _save(fig, 'locality_decay')


def plot_entropy(summary):
    for name, out in _outputs(summary, 'entropy-scan'):
        print(f"\n>>> Block entropy: {name}")
        df = pd.read_csv(out / 'entropy-scan.csv')
        fig, ax = plt.subplots()
        sns.lineplot(data=df, x='ell', y='entropy', hue='lambda', marker='o', palette='deep', ax=ax)
        ax.set_xlabel('block length ℓ', fontsize=12, fontweight='bold')
        ax.set_ylabel('S (nats)', fontsize=12, fontweight='bold')
        ax.set_title('Area law', fontsize=14, fontweight='bold')
        _save(fig, f'{name}_entropy')


def print_topology(summary):
    for name, out in _outputs(summary, 'topo-degeneracy'):
        print("\n" + "=" * 60)
        print(f"Ground degeneracy ({name})")
        print("=" * 60)
        print(pd.read_csv(out / 'topo-degeneracy.csv').to_string(index=False))
    for name, out in _outputs(summary, 'topo-entropy'):
        with open(out / 'topo-entropy.json') as f:
            rec = json.load(f)
        print(f"  {name}: γ_topo/ln2 = {rec['gamma_over_ln2']:.6g} ({rec['state']} on {rec['surface']})")


def main():
    print("=== Analyzing Suite Results ===")
    PLOTS_DIR.mkdir(parents=True, exist_ok=True)

    summary = load_latest_summary()
    df_results = pd.DataFrame(summary['results'])
    print(f"\nLoaded {len(df_results)} experiment results")
    print(f"Subcommands: {df_results['subcommand'].unique()}")

    plot_gap_scans(summary)
    plot_lr_cones(summary)
    plot_decay_profiles(summary)
    plot_entropy(summary)
    print_topology(summary)

    print("\n✓ Analysis complete! Check results/plots/")


if __name__ == '__main__':
    main()
