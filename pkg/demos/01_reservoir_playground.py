"""Drive the single-reservoir simulator by hand.

Runs the two-interval tolling fixture three times: without tolls, with a
flat distance toll, and with a deliberately high toll, then prints the
per-interval mean densities next to the critical density so the effect
of pricing on accumulation is visible in one table.  Writes the time
series of the untolled run to CSV for plotting.
"""

import argparse

import numpy as np

import sbopt as sb
from sbopt.bench.problems import simple_toll_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None,
                        help="write the untolled time series CSV here")
    args = parser.parse_args()

    cfg, curve, template = simple_toll_scenario()
    k_cr = 15.0
    print(f"demand profile: {cfg.demand_segments}")
    print(f"flow curve: plateau {curve.q_max:.0f} veh/h/lane on "
          f"[{curve.k_cr_low:.0f}, {curve.k_cr_high:.0f}] veh/km/lane, "
          f"jam at {curve.k_jam:.0f}")
    print()

    runs = {
        "untolled": np.zeros(2),
        "moderate toll": np.array([0.3, 0.3]),
        "heavy toll": np.array([0.9, 0.9]),
    }
    header = f"{'case':>14}  " + "  ".join(f"k_bar[{h}]" for h in range(2))
    print(header + f"   (target {k_cr:.0f})")
    first_out = None
    for name, tau in runs.items():
        out = sb.run_reservoir(cfg, curve, template.with_tau(tau), seed=0)
        if first_out is None:
            first_out = out
        k_bar = out.k_bar
        cells = "  ".join(f"{k:8.2f}" for k in k_bar)
        print(f"{name:>14}  {cells}")

    if args.out:
        sb.write_series_csv(first_out, args.out)
        print(f"\nuntolled series written to {args.out}")


if __name__ == "__main__":
    main()
