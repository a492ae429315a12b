#!/usr/bin/env python3
import argparse
import json
import logging
import time
from datetime import datetime
from pathlib import Path

import yaml

from gapflow.cli import execute
from gapflow.config import make_config
from gapflow.errors import GapflowError


class SuiteRunner:
    def __init__(self, config_file, results_dir='results/raw'):
        with open(config_file) as f:
            self.config = yaml.safe_load(f)

        self.results_dir = Path(results_dir)
        self.results_dir.mkdir(parents=True, exist_ok=True)

        self.timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')

    def run_experiment(self, exp_config):
        exp_config = dict(exp_config)
        exp_name = exp_config.pop('name')
        subcommand = exp_config.pop('subcommand')
        out_dir = self.results_dir / f'{exp_name}_{self.timestamp}'

        cfg = make_config(subcommand, exp_config, out=str(out_dir))
        start = time.perf_counter()
        code = execute(cfg)
        return {
            'experiment': exp_name,
            'subcommand': subcommand,
            'out': str(out_dir),
            'exit_code': code,
            'wall_time_s': time.perf_counter() - start,
        }

    def run_all_experiments(self, only=None):
        print(f"=== Starting Suite Run ({self.timestamp}) ===")
        print(f"Config: {self.config.get('description', 'No description')}")

        all_results = []
        for exp in self.config['experiments']:
            if only and exp['name'] not in only:
                continue
            try:
                all_results.append(self.run_experiment(exp))
            except GapflowError as e:
                print(f"  ✗ Error in {exp['name']}: {e.message}")
                all_results.append({'experiment': exp['name'], 'subcommand': exp.get('subcommand'),
                                    'exit_code': e.exit_code, 'error': e.to_record()})

        summary_file = self.results_dir / f'summary_{self.timestamp}.json'
        with open(summary_file, 'w') as f:
            json.dump({
                'config': self.config,
                'results': all_results,
                'timestamp': self.timestamp,
            }, f, indent=2, default=str)

        failed = [r['experiment'] for r in all_results if r['exit_code'] != 0]
        print(f"\nAll experiments complete! Summary: {summary_file}")
        if failed:
            print(f"  Failed: {', '.join(failed)}")
        return all_results


def main():
    parser = argparse.ArgumentParser(description='Run a suite of gapflow jobs')
    parser.add_argument('--config', required=True, help='YAML suite file')
    parser.add_argument('--only', nargs='*', help='experiment names to run')
    parser.add_argument('--log-level', default='WARNING')
    args = parser.parse_args()

    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
    runner = SuiteRunner(args.config)
    runner.run_all_experiments(args.only)


if __name__ == '__main__':
    main()
