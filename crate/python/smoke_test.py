"""End-to-end smoke test of the thoraguide_py extension.

Build and install first:
    cd crates/python && maturin build --release && pip install ../../target/wheels/thoraguide-*.whl
"""

import json
import math
import os
import sys
import tempfile

import thoraguide_py as tg

ASSETS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "crates", "core", "assets")


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    surface = tg.BodyModel.desk("surface")
    skeleton = tg.BodyModel.desk("skeleton")
    rules = tg.RuleSet.default()
    check(surface.flavor == "surface" and skeleton.flavor == "skeleton", "desk models load")
    check(len(rules.view_ids) > 0, f"default rules carry {len(rules.view_ids)} views")

    rest = skeleton.pose(None, None, [0.0, 0.0, 0.0])
    check(len(rest.vertices) == skeleton.num_vertices, "rest pose vertex count")

    with open(os.path.join(ASSETS, "synth_config.json")) as f:
        config = json.load(f)
    config["seed"] = 7
    config = json.dumps(config)
    session, truth = tg.synthesize(surface, skeleton, rules, config)
    check(session.num_frames == 8, "synthetic session has 8 frames")

    fit = tg.fit(surface, skeleton, session)
    outliers = set(json.loads(truth)["outlier_frames"])
    check(not outliers & set(fit.inlier_frames), f"outliers {sorted(outliers)} excluded from {fit.inlier_frames}")
    check(fit.consensus_rms_m < 0.01, f"consensus rms {fit.consensus_rms_m:.2e} m")

    guidance = tg.guide(skeleton, fit, rules)
    probes = guidance.probes()
    check(len(probes) == len(rules.view_ids), f"{len(probes)} probe poses placed")
    for p in probes:
        axis = p.axis
        check(abs(math.sqrt(sum(a * a for a in axis)) - 1.0) < 1e-9, f"{p.view_id} axis is unit")

    card = json.loads(tg.score(surface, session, fit, guidance, truth))
    worst = max(v["error"]["e_pos_mm"] for v in card["views"])
    check(worst < 20.0, f"worst position error {worst:.2f} mm against truth")

    report = json.loads(tg.evaluate(session, guidance))
    check(len(report["samples"]) == 6, "three comparisons for each of the two recorded poses")

    a = tg.RigidTransform([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    b = tg.RigidTransform([1.0, 0.0, 0.0, 0.0], [0.003, 0.004, 0.0])
    e_pos, e_tilt, e_spin = tg.pose_error(a, b, a)
    check(abs(e_pos - 5.0) < 1e-12 and e_tilt == 0.0 and e_spin == 0.0, "pose error 3-4-5")

    check(tg.FitOutput.from_json(fit.to_json()).to_json() == fit.to_json(), "fit output round trip")

    try:
        tg.CaptureSession.from_json("{}")
        check(False, "malformed session rejected")
    except tg.ThoraguideError:
        check(True, "malformed session rejected")

    with tempfile.TemporaryDirectory() as d:
        out = os.path.join(d, "session.json")
        code = tg.cli(["synth", "--config", os.devnull, "--out", out])
        check(code == 3, f"cli reports data error with exit {code}")
        session.save(out)
        check(tg.CaptureSession.load(out).session_id == session.session_id, "session save and load")

    print("smoke test passed")


if __name__ == "__main__":
    main()
