# Copyright 2026 The cone-infer Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""End-to-end checks of the cone-infer executable: exit codes, error
records, determinism and report schema."""

import json
import os
import subprocess
import sys
import tempfile

import jsonschema

BIN = os.path.abspath(sys.argv[1])
ROOT = sys.argv[2]
SCHEMA = json.load(open(os.path.join(ROOT, "schemas", "report.schema.json")))
VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)

failures = []


def check(cond, label):
    print(("ok   " if cond else "FAIL ") + label)
    if not cond:
        failures.append(label)


def cli(*args, env=None):
    full_env = dict(os.environ)
    full_env.pop("CONE_INFER_JOBS", None)
    if env:
        full_env.update(env)
    return subprocess.run([BIN, *args], capture_output=True, text=True, env=full_env, cwd=WORK)


def write(name, obj):
    path = os.path.join(WORK, name)
    with open(path, "w") as f:
        f.write(obj if isinstance(obj, str) else json.dumps(obj))
    return path


def report_of(proc, label):
    check(proc.returncode == 0, label + " exits 0 (stderr: %s)" % proc.stderr.strip()[:200])
    try:
        rep = json.loads(proc.stdout)
    except ValueError:
        check(False, label + " prints JSON")
        return None
    errors = sorted(VALIDATOR.iter_errors(rep), key=str)
    check(not errors, label + " matches the report schema" + ("" if not errors else ": " + errors[0].message))
    return rep


def error_of(proc, code, kind, label):
    check(proc.returncode == code, "%s exits %d (got %d)" % (label, code, proc.returncode))
    try:
        err = json.loads(proc.stderr.strip().splitlines()[-1])["error"]
        check(err["kind"] == kind, "%s reports %s (got %s)" % (label, kind, err["kind"]))
        return err
    except (ValueError, KeyError, IndexError):
        check(False, label + " prints a structured error")
        return None


WORK = tempfile.mkdtemp(prefix="cone_infer_cli_")
HYP = {"kind": "order_cone", "groups": 3, "nuisance": 3}
SIM = {
    "basis": "exchangeable",
    "hypothesis": HYP,
    "simulation": {"gamma": [1, 1, 1, 0.5, 0.5, 0.5], "n_subjects": 120, "n_times": 3,
                   "rho": 0.3, "replicates": 100, "dataset_out": "h0.csv"},
}

# simulate, then fit and test the written dataset
sim_cfg = write("sim.json", SIM)
rep = report_of(cli("simulate", "--config", sim_cfg, "--seed", "42"), "simulate")
data = os.path.join(WORK, "h0.csv")
check(os.path.exists(data), "simulate writes the dataset")
par = report_of(cli("simulate", "--config", sim_cfg, "--seed", "42", env={"CONE_INFER_JOBS": "3"}),
                "simulate with CONE_INFER_JOBS")
if rep and par:
    check(rep["results"] == par["results"], "worker count does not change results")

test_cfg = write("test.json", {"basis": "exchangeable", "hypothesis": HYP})
a = report_of(cli("test", "--config", test_cfg, "--data", data, "--seed", "42"), "test")
b = report_of(cli("test", "--config", test_cfg, "--data", data, "--seed", "42"), "test rerun")
if a and b:
    check(a["results"] == b["results"] and a["inputs_digest"] == b["inputs_digest"], "test is deterministic")
    check(0.0 <= a["results"]["p_value"] <= 1.0, "p-value in [0, 1]")
over = report_of(cli("test", "--config", test_cfg, "--data", data, "--alpha", "0.1", "--weights", "tube"),
                 "test with overrides")
if over:
    check(over["results"]["alpha"] == 0.1, "--alpha overrides the config")
    check(over["results"]["weights"]["source"] == "tube", "--weights selects the route")
report_of(cli("fit", "--config", test_cfg, "--data", data), "fit")

# weights through every route
w = report_of(cli("weights", "--config", write("w.json", {"weights": {"route": "closed_form", "phi": 1.0471975}})),
              "weights closed form")
if w:
    got = w["results"]["weights"]["weights"]
    check(all(abs(x - y) < 1e-6 for x, y in zip(got, [1 / 3, 1 / 2, 1 / 6])), "closed form gives (1/3, 1/2, 1/6)")
report_of(cli("weights", "--config", os.path.join(ROOT, "configs", "weights_order4.json")), "weights level")
w = report_of(cli("weights", "--config", os.path.join(ROOT, "configs", "weights_order4.json"), "--weights", "mc",
                  "--seed", "7"), "weights level by simulation")
if w:
    got = w["results"]["weights"]["weights"]
    check(all(abs(x - y) < 0.01 for x, y in zip(got, [1 / 4, 11 / 24, 1 / 4, 1 / 24])), "simulated level probabilities")
report_of(cli("weights", "--config", write("wt.json", {"weights": {"route": "tube",
                                                                  "cone": {"generators": [[1, 0, 0], [0, 1, 0], [1, 1, 1]]}}})),
          "weights tube")
report_of(cli("weights", "--config", write("wm.json", {"weights": {"route": "monte_carlo", "replicates": 20000,
                                                                  "cone": {"generators": [[1, 0], [0, 1]]}}}),
              "--seed", "3"), "weights monte carlo")

# power, with the aligned table echoed when the report goes to a file
p = report_of(cli("power", "--config", os.path.join(ROOT, "configs", "power.json")), "power")
if p:
    check(abs(p["results"]["rows"]["s_n_lower"][2] - 0.518) < 1e-3, "power table entry")
out = os.path.join(WORK, "power_out.json")
proc = cli("power", "--config", os.path.join(ROOT, "configs", "power.json"), "--out", out, "--delta-grid", "0,2.5")
check(proc.returncode == 0 and "delta" in proc.stdout, "power --out prints the text table")
if os.path.exists(out):
    written = json.load(open(out))
    check(written["results"]["delta"] == [0, 2.5], "--delta-grid overrides the grid")
    check(not list(VALIDATOR.iter_errors(written)), "written report matches the schema")

# failures
err = error_of(cli("power", "--config", write("bad_key.json", {"power": {"grid": [1]}, "colour": 2})), 2,
               "ConfigError", "unknown keys")
if err:
    check(set(err.get("keys", [])) == {"power.grid", "colour"}, "unknown keys are listed")
error_of(cli("power", "--config", os.path.join(WORK, "missing.json")), 2, "IoError", "missing config")
error_of(cli("power", "--config", write("broken.json", "{ nope")), 2, "ConfigError", "malformed config")
error_of(cli("test", "--config", test_cfg), 2, "ConfigError", "test without data")
unbalanced = write("unbalanced.csv", "subject,time,y,x\n1,1,0,1\n1,2,0,1\n2,1,0,1\n3,1,0,1\n3,2,0,1\n")
error_of(cli("fit", "--config", test_cfg, "--data", unbalanced), 3, "BalanceError", "unbalanced data")
error_of(cli("fit", "--config", test_cfg, "--data", os.path.join(WORK, "absent.csv")), 3, "IoError", "missing data")
error_of(cli("weights", "--config", write("phi.json", {"weights": {"route": "closed_form", "phi": 7}})), 4,
         "DomainError", "angle out of range")
error_of(cli("simulate", "--config", write("zero.json", dict(SIM, simulation=dict(SIM["simulation"], replicates=0)))),
         2, "ConfigError", "too few replicates")
error_of(cli("weights", "--config", os.path.join(ROOT, "configs", "weights_order4.json"), "--weights", "tube"), 2,
         "ConfigError", "tube route without a cone")
check(cli("bogus").returncode == 2, "unknown subcommand exits 2")

print("%d failure(s)" % len(failures))
sys.exit(1 if failures else 0)
