"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel with the best-of-``repeat`` time for each importable
backend and the speedup of the compiled one.
"""
import argparse
import timeit

import numpy as np

from emogesture import kernels
from emogesture.motion import matrix_to_rot6d, upper_body_skeleton


def workloads(rng):
    from scipy.spatial.transform import Rotation

    sk = upper_body_skeleton()
    rot6 = matrix_to_rot6d(Rotation.random(80 * 60 * 16, random_state=rng).as_matrix())
    other = matrix_to_rot6d(Rotation.random(len(rot6), random_state=rng).as_matrix())
    clip = rot6[: 60 * 16].reshape(60, 96)
    mats = Rotation.random(60 * 16, random_state=rng).as_matrix().reshape(60, 16, 3, 3)
    parents = np.asarray(sk.parents, dtype=np.int64)
    audio = np.sort(rng.uniform(0, 4, 12))
    gesture = np.sort(rng.uniform(0, 4, 10))
    samples = rng.normal(size=(20, 60, 96))
    return {
        "rot6d_to_matrix (76.8k rows)": lambda k: k.rot6d_to_matrix(rot6),
        "rot6d_geodesic (76.8k rows)": lambda k: k.rot6d_geodesic(rot6, other),
        "angular_speed (60 x 16 joints)": lambda k: k.angular_speed(clip, 15.0),
        "forward_kinematics (60 x 16)": lambda k: k.forward_kinematics(mats, parents, sk.offsets, sk.order),
        "beat_align_score (12 x 10 beats)": lambda k: k.beat_align_score(audio, gesture, 0.1),
        "pairwise_l2 (20 samples, 60 x 96)": lambda k: k.pairwise_l2(samples),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    impls = kernels.backends()
    names = sorted(impls)
    print(f"backends: {', '.join(names)} (active: {kernels.BACKEND})")
    header = f"{'kernel':36s}" + "".join(f"{n + ' [ms]':>16s}" for n in names)
    if "cython" in impls:
        header += f"{'speedup':>10s}"
    print(header)
    for label, fn in workloads(np.random.default_rng(0)).items():
        times = {}
        for name in names:
            impl = impls[name]
            timer = timeit.Timer(lambda: fn(impl))
            number, _ = timer.autorange()
            times[name] = min(timer.repeat(args.repeat, number)) / number * 1e3
        row = f"{label:36s}" + "".join(f"{times[n]:16.4f}" for n in names)
        if "cython" in impls:
            row += f"{times['python'] / times['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
