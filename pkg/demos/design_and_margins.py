"""LQG design for the default plant, its margins and the LTR trend."""

from coanda_lqg.control import ltr_sweep, synthesize

LADDER = (1e-2, 1e-1, 1.0, 1e1, 1e2, 1e4)


def main():
    design = synthesize()
    for label, m in (("delay-free loop", design.margins), ("loop with delay", design.margins_delayed)):
        print(
            f"{label}: crossover {m.crossover:.1f} Hz, gain margin {m.gain_margin:.2f} dB, "
            f"phase margin {m.phase_margin:.2f} deg"
        )
    print("LQR gain:", design.lqr.K.round(4).tolist())
    sweep = ltr_sweep(design.aug, design.lqr, LADDER)
    for ratio, gap in zip(LADDER, sweep.gaps):
        print(f"noise ratio {ratio:g}: sup |S_LQG - S_LQR| = {gap:.3f}")


if __name__ == "__main__":
    main()
