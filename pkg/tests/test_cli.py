import json

import numpy as np
import pytest

from stitch.cli import main
from stitch.cutout import cutout_from_attention
from stitch.fileio import mask_to_pgm, read_jsonl, sha256_file
from stitch.model import build_adapter
from stitch.pipeline import verify_manifest
from stitch.rng import noise_rng

SMALL_CFG = """\
model = toy-small
s_steps = 2
t_steps = 5
kappa = 3
seed = 5
"""


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL_CFG)
    return str(path)


@pytest.fixture()
def layout_file(tmp_path, cfg_file):
    out = tmp_path / "layout.json"
    code = main(
        [
            "plan",
            "--prompt",
            "a cat left of a dog",
            "--provider",
            "fallback",
            "--config",
            cfg_file,
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return str(out)


class TestPlanCommand:
    def test_writes_schema(self, layout_file):
        data = json.loads(open(layout_file).read())
        assert set(data) == {"background", "canvas", "objects"}
        assert len(data["objects"]) == 2
        assert data["background"] == "background"

    def test_llm_provider_needs_base_url(self, tmp_path, cfg_file, capsys):
        code = main(
            [
                "plan",
                "--prompt",
                "a dog",
                "--provider",
                "llm",
                "--config",
                cfg_file,
                "--out",
                str(tmp_path / "x.json"),
            ]
        )
        assert code == 1
        assert "base_url" in capsys.readouterr().err

    def test_missing_required_arg_is_usage_error(self):
        assert main(["plan", "--out", "x.json"]) == 2


class TestGenerateCommand:
    def test_replay_and_parallel_hashes(self, tmp_path, cfg_file, layout_file):
        outs = [tmp_path / f"run{i}" for i in range(3)]
        base = ["generate", "--prompt", "a cat left of a dog", "--layout", layout_file, "--config", cfg_file]
        assert main(base + ["--out", str(outs[0])]) == 0
        assert main(base + ["--out", str(outs[1])]) == 0
        assert main(base + ["--out", str(outs[2]), "--workers", "3"]) == 0
        hashes = [sha256_file(o / "final.tnsr") for o in outs]
        assert hashes[0] == hashes[1] == hashes[2]
        meta = verify_manifest(outs[0])
        assert meta["inputs"]["layout_file_sha256"] == sha256_file(layout_file)

    def test_seed_override_changes_output(self, tmp_path, cfg_file, layout_file):
        base = ["generate", "--prompt", "a cat left of a dog", "--layout", layout_file, "--config", cfg_file]
        assert main(base + ["--out", str(tmp_path / "a")]) == 0
        assert main(base + ["--seed", "99", "--out", str(tmp_path / "b")]) == 0
        assert sha256_file(tmp_path / "a" / "final.tnsr") != sha256_file(tmp_path / "b" / "final.tnsr")

    def test_invalid_config_is_domain_error(self, tmp_path, layout_file, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("s_steps = 7\nt_steps = 5\n")
        code = main(
            [
                "generate",
                "--prompt",
                "p",
                "--layout",
                layout_file,
                "--config",
                str(bad),
                "--out",
                str(tmp_path / "r"),
            ]
        )
        assert code == 1
        assert "s_steps" in capsys.readouterr().err

    def test_missing_layout_file(self, tmp_path, cfg_file, capsys):
        code = main(
            [
                "generate",
                "--prompt",
                "p",
                "--layout",
                str(tmp_path / "absent.json"),
                "--config",
                cfg_file,
                "--out",
                str(tmp_path / "r"),
            ]
        )
        assert code == 1
        assert "not found" in capsys.readouterr().err


class TestBenchCommands:
    def test_gen_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert main(["bench", "gen", "--task", "neg", "--n", "100", "--seed", "0", "--out", str(out)]) == 0
        assert sha256_file(a) == sha256_file(b)
        assert len(read_jsonl(a)) == 100

    def test_unknown_task(self, tmp_path, capsys):
        code = main(["bench", "gen", "--task", "pentagon", "--n", "5", "--seed", "0", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "unknown task" in capsys.readouterr().err

    def test_closed_loop_through_cli(self, tmp_path, capsys):
        prompts = tmp_path / "prompts.jsonl"
        dets = tmp_path / "dets.jsonl"
        verdicts = tmp_path / "verdicts.jsonl"
        report = tmp_path / "report.tsv"
        assert main(["bench", "gen", "--task", "3obj", "--n", "25", "--seed", "1", "--out", str(prompts)]) == 0
        assert main(["bench", "oracle-detect", "--prompts", str(prompts), "--out", str(dets)]) == 0
        assert main(["bench", "eval", "--prompts", str(prompts), "--detections", str(dets), "--out", str(verdicts)]) == 0
        rows = read_jsonl(verdicts)
        assert len(rows) == 25
        assert all(r["passed"] for r in rows)
        assert main(["report", "--out", str(report), str(verdicts)]) == 0
        text = report.read_text()
        assert text.splitlines()[0] == "Task\tAccuracy"
        assert "ThreeObj\t1.00±0.00" in text

    def test_oracle_detect_with_layout_file(self, tmp_path):
        prompts = tmp_path / "p.jsonl"
        layouts = tmp_path / "l.jsonl"
        dets = tmp_path / "d.jsonl"
        assert main(["bench", "gen", "--task", "2obj", "--n", "5", "--seed", "2", "--out", str(prompts)]) == 0
        # derive layouts once, save them, then feed them back explicitly
        from stitch.fileio import write_jsonl
        from stitch.layout import fallback_plan, plan_to_dict
        from stitch.poseval import record_from_dict, scene_for_record

        records = [record_from_dict(r) for r in read_jsonl(prompts)]
        write_jsonl(
            layouts,
            [plan_to_dict(fallback_plan(scene_for_record(r), 32)) for r in records],
        )
        assert main(["bench", "oracle-detect", "--prompts", str(prompts), "--layouts", str(layouts), "--out", str(dets)]) == 0
        assert len(read_jsonl(dets)) == 5

    def test_report_across_two_seeds(self, tmp_path):
        files = []
        for seed in (0, 1):
            prompts = tmp_path / f"p{seed}.jsonl"
            dets = tmp_path / f"d{seed}.jsonl"
            verdicts = tmp_path / f"v{seed}.jsonl"
            main(["bench", "gen", "--task", "pab", "--n", "10", "--seed", str(seed), "--out", str(prompts)])
            main(["bench", "oracle-detect", "--prompts", str(prompts), "--out", str(dets)])
            main(["bench", "eval", "--prompts", str(prompts), "--detections", str(dets), "--out", str(verdicts)])
            files.append(str(verdicts))
        report = tmp_path / "r.tsv"
        assert main(["report", "--out", str(report)] + files) == 0
        assert "PAB\t1.00±0.00" in report.read_text()


class TestSelectHeadCommand:
    def test_planted_reference_recovers_head(self, tmp_path):
        # kappa=1 keeps per-head masks distinct on the tiny grid
        cfg = tmp_path / "heads.cfg"
        cfg.write_text("model = toy-small\ns_steps = 2\nt_steps = 5\nkappa = 1\nseed = 5\n")
        adapter = build_adapter("toy-small", seed=5)
        objects = ["dog", "teddy bear"]
        refdir = tmp_path / "refs"
        (tmp_path / "objs.txt").write_text("\n".join(objects + ["unlisted thing"]) + "\n")
        schedule = adapter.schedule(5)
        for obj in objects:
            prompt = f"a photo of a {obj}"
            _, records = adapter.run_steps(
                adapter.initial_noise(noise_rng(5, f"probe/{obj}")),
                prompt,
                schedule,
                0,
                2,
                capture_step=1,
                capture_heads=[(0, 1)],
            )
            mask = cutout_from_attention(
                records[0], adapter.pad_flags(prompt), adapter.grid, eta=0.9, kappa=1
            )
            mask_to_pgm(refdir / f"{obj.replace(' ', '_')}.pgm", mask.selected)
        out = tmp_path / "heads.tsv"
        code = main(
            [
                "select-head",
                "--probe-objects",
                str(tmp_path / "objs.txt"),
                "--references",
                str(refdir),
                "--etas",
                "0.75,0.9",
                "--config",
                str(cfg),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "Block\tHead\tη\tIoU\tIoT"
        block, head, eta, iou_s, iot_s = lines[1].split("\t")
        assert (block, head, eta) == ("0", "1", "0.9")
        assert iou_s == "1.00" and iot_s == "1.00"
        # toy-small has 2 blocks x 2 heads
        assert len(lines) == 1 + 4


class TestAblateCommand:
    def test_sweep_directories(self, tmp_path, cfg_file, layout_file):
        out = tmp_path / "sweep"
        code = main(
            [
                "ablate-s",
                "--s-values",
                "1,2",
                "--prompt",
                "a cat left of a dog",
                "--layout",
                layout_file,
                "--config",
                cfg_file,
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert (out / "s_1" / "case_0" / "final.tnsr").is_file()
        assert (out / "s_2" / "case_0" / "final.tnsr").is_file()
        assert (out / "summary.tsv").read_text().startswith("s\tcases\t")

    def test_bad_s_values(self, tmp_path, cfg_file, layout_file, capsys):
        code = main(
            [
                "ablate-s",
                "--s-values",
                "one,two",
                "--prompt",
                "p",
                "--layout",
                layout_file,
                "--config",
                cfg_file,
                "--out",
                str(tmp_path / "x"),
            ]
        )
        assert code == 1
        assert "--s-values" in capsys.readouterr().err
