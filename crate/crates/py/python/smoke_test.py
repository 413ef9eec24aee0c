"""Quick end-to-end check of the Python bindings."""

import json
import tempfile

import groundplan_py as gp

SMALL = json.dumps({"resolution": 64})


def main():
    names = gp.tasks()
    assert ("push_button", 0, "L1") in names, names

    prompt = gp.build_prompt("push the red button", ["grasp the block"])
    assert prompt.startswith("<image>\n" * 4), prompt
    assert prompt.endswith("Please generate the next action plan.")

    views = [gp.Mask(2, 2, [True, False, False, True]), gp.Mask.empty(2, 2)]
    plan = gp.Plan.parse("Grasp <p> red block </p><seg>.", [views])
    assert (plan.action, plan.object, plan.location) == ("grasp", "red block", None), plan
    assert gp.Plan.parse(plan.serialize(), plan.masks()) == plan
    assert views[0].iou(views[0]) == 1.0
    try:
        gp.Plan.parse("Fly away.")
    except ValueError as e:
        assert str(e).startswith("unknown_action"), e
    else:
        raise AssertionError("bad action accepted")

    trace = gp.run_episode("push_button", seed=3, config=SMALL)
    assert trace["status"] == "success", trace["status"]

    online = gp.eval_online(episodes=1, runs=2, seed=1, config=SMALL)
    assert all(v["mean"] == 1.0 for v in online["variations"])

    with tempfile.TemporaryDirectory() as out:
        cfg = json.dumps({"resolution": 64, "suite": "builtin"})
        manifest = gp.generate_dataset("plan", out, episodes=1, seed=2, config=cfg)
        offline = gp.eval_offline(out, config=cfg)
        assert offline["overall"]["keysteps"] == len(manifest["files"])
        assert offline["overall"]["act"] == 100.0

    grads = gp.check_gradients(10)
    assert max(grads["bce_max_rel_error"], grads["dice_max_rel_error"]) < 1e-4
    print("smoke test ok")


if __name__ == "__main__":
    main()
