#!/usr/bin/env python3
import argparse
from pathlib import Path

from gapflow.errors import ValidationError
from gapflow.stabilizer import (
    dump_complex,
    genus_surface,
    ground_degeneracy,
    load_complex,
    planar,
    toric_code_stabilizers,
    torus,
)

COMMITTED = Path(__file__).resolve().parents[2] / 'fixtures'


def degeneracy(complex_) -> int:
    return ground_degeneracy(toric_code_stabilizers(complex_))


class SurfaceFixtureGenerator:
    def __init__(self, out_dir: str = 'results/surfaces', committed: Path = COMMITTED, force: bool = False):
        self.out_dir = Path(out_dir)
        self.committed = Path(committed)
        self.force = force
        if self.out_dir.resolve() == self.committed.resolve():
            raise ValidationError(f"{self.out_dir} holds the committed fixtures; pick another output directory")
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def fixtures(self):
        yield 'disk', planar(3, 3, 'smooth')
        yield 'disk_rough', planar(3, 3, 'rough')
        yield 'half_plane', planar(3, 3, 'mixed')
        yield 'torus', torus(3, 3)
        yield 'genus2_connected_sum', genus_surface(2, 3)

    def write_all(self):
        written = {}
        for name, complex_ in self.fixtures():
            path = self.out_dir / f'{name}.json'
            if path.exists() and not self.force and load_complex(path) != complex_:
                raise ValidationError(f"{path} exists with different content; pass --force to replace it")
            dump_complex(complex_, path)
            deg = degeneracy(complex_)
            written[name] = deg
            print(f"Generated {path}: V={complex_.star_vertex_count} E={complex_.n_edges} "
                  f"F={complex_.n_faces} chi={complex_.euler_characteristic} degeneracy={deg}")
        return written

    def check_committed(self, written):
        """The hand-glued genus-2 fixture must agree with the generated connected sum."""
        path = self.committed / 'genus2.json'
        fixture = load_complex(path)
        generated = load_complex(self.out_dir / 'genus2_connected_sum.json')
        if fixture.genus != generated.genus or degeneracy(fixture) != written['genus2_connected_sum']:
            raise ValidationError(f"{path} disagrees with the generated genus-2 surface",
                                  {'fixture_genus': fixture.genus, 'generated_genus': generated.genus})
        print(f"✓ {path} agrees: genus={fixture.genus} degeneracy={degeneracy(fixture)}")


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='Write JSON cell-complex fixtures')
    parser.add_argument('--out', default='results/surfaces')
    parser.add_argument('--force', action='store_true', help='replace existing files that differ')
    args = parser.parse_args()
    generator = SurfaceFixtureGenerator(args.out, force=args.force)
    generator.check_committed(generator.write_all())
