import shutil
import subprocess

import pytest

from routeseq.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


BOX = ["--bbox", "-97", "-94", "46", "49"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["generate", *BOX, "--n", "60", "--seed", "7", "--out-dir", str(d)]) == 0
    return d


def test_generate_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", *BOX, "--n", "30", "--seed", "7", "--out-dir", tmp_path)
    assert code == 0
    assert out.startswith("nodes=376 edges=455 routes=30 train=21 test=9 mean_hops=")
    assert (tmp_path / "hops.csv").read_text().startswith("hops,count\n")
    assert (tmp_path / "routes.txt").read_text().startswith("# seed=7 split=0.67 n=30\n")
    assert (tmp_path / "graph.txt").read_text().startswith("376 455\n")


def test_generate_is_byte_identical(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "generate", *BOX, "--n", "25", "--seed", "3", "--out-dir", tmp_path / d)[0] == 0
    for name in ("routes.txt", "hops.csv", "graph.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_single_route_and_explicit_files(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "--edges", "tests/fixtures/toy5.mtx", "--coords", "tests/fixtures/toy5.xy",
                       "--n", "1", "--out-dir", tmp_path)
    assert code == 0 and "routes=1 train=1 test=0" in out


def test_generate_errors(capsys, tmp_path):
    code, _, err = run(capsys, "generate", "--edges", tmp_path / "missing.mtx", "--coords", tmp_path / "x.xy")
    assert code == 2 and "missing.mtx" in err
    (tmp_path / "bad.mtx").write_text("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 q\n")
    (tmp_path / "c.xy").write_text("0 0\n1 0\n")
    code, _, err = run(capsys, "generate", "--edges", tmp_path / "bad.mtx", "--coords", tmp_path / "c.xy")
    assert code == 2 and ":3:" in err
    assert run(capsys, "generate", "--edges", tmp_path / "bad.mtx")[0] == 2
    assert run(capsys, "generate", "--n", "0")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def train_args(corpus, out, *extra):
    return ["train", "--dataset", corpus / "routes.txt", "--graph", corpus / "graph.txt", "--hidden", "8",
            "--emb", "8", "--epochs", "2", "--seed", "1", "--out-dir", out, *extra]


def test_train_eval_rank_pipeline(capsys, corpus, tmp_path):
    code, out, _ = run(capsys, *train_args(corpus, tmp_path))
    assert code == 0 and out.startswith("variant=dual d_ctx=16 epochs=2")
    assert (tmp_path / "loss.csv").read_text().splitlines()[0] == "epoch,sigma,mean_nll"
    code, out, _ = run(capsys, "eval", "--checkpoint", tmp_path / "model.ckpt", "--dataset", corpus / "routes.txt",
                       "--graph", corpus / "graph.txt", "--out-dir", tmp_path)
    assert code == 0 and out.startswith("shortest=") and "successful=" in out
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "src,dst,class,pred_cost,astar_cost"
    assert lines[-2] == "n,shortest_rate,successful_rate" and lines[-1].startswith("19,")
    code, out, _ = run(capsys, "rank", "--checkpoint", tmp_path / "model.ckpt", "--dataset", corpus / "routes.txt",
                       "--out-dir", tmp_path)
    assert code == 0
    g, l, s, tol = (tmp_path / "rank.txt").read_text().split()
    assert (int(g), int(l), int(s)) == (8, 8, 16) and float(tol) > 0


def test_train_is_deterministic(capsys, corpus, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, *train_args(corpus, tmp_path / d, "--diffuse-tanh", "--schedule", "5:1,1:1"))[0] == 0
    for name in ("model.ckpt", "loss.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "loss.csv").read_text().splitlines()[1].startswith("1,5.0,")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_variants_and_errors(capsys, corpus, tmp_path):
    code, out, _ = run(capsys, *train_args(corpus, tmp_path, "--variant", "gru2rnn", "--hidden", "16",
                                           "--epochs", "1"))
    assert code == 0 and "d_ctx=16" in out
    assert run(capsys, *train_args(corpus, tmp_path, "--epochs", "0"))[0] == 2
    assert run(capsys, *train_args(corpus, tmp_path, "--schedule", "1:5,5:5"))[0] == 2
    code, _, err = run(capsys, *train_args(corpus, tmp_path, "--lr", "1e300", "--clip", "1e300", "--epochs", "3"))
    assert code == 3 and "epoch" in err
    code, _, _ = run(capsys, "rank", "--checkpoint", tmp_path / "model.ckpt", "--dataset", corpus / "routes.txt",
                     "--out-dir", tmp_path)
    assert code == 2


def test_eval_errors(capsys, corpus, tmp_path):
    assert run(capsys, *train_args(corpus, tmp_path, "--epochs", "1"))[0] == 0
    (tmp_path / "trainonly.txt").write_text("# seed=0 split=1.0 n=1\nTRAIN 1 0 1\n")
    code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "model.ckpt", "--dataset", tmp_path / "trainonly.txt",
                       "--out-dir", tmp_path, *BOX)
    assert code == 2
    code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "model.ckpt", "--dataset", corpus / "routes.txt",
                       "--edges", "tests/fixtures/toy5.mtx", "--coords", "tests/fixtures/toy5.xy")
    assert code == 2 and "nodes" in err


def test_config_file(capsys, corpus, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# smoke run\ndataset = {corpus / 'routes.txt'}\ngraph = {corpus / 'graph.txt'}\n"
                   "hidden = 8\nemb = 8\nepochs = 3\nvariant = lstm2rnn\ndiffuse-tanh = false\n")
    code, out, _ = run(capsys, "train", "--config", cfg, "--epochs", "1", "--out-dir", tmp_path)
    assert code == 0 and "variant=lstm2rnn" in out and "epochs=1" in out
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "train", "--config", cfg)
    assert code == 2 and "colour" in err
    cfg.write_text("hidden = lots\n")
    assert run(capsys, "train", "--config", cfg, "--dataset", "x")[0] == 2
    assert run(capsys, "train", "--config", tmp_path / "none.cfg", "--dataset", "x")[0] == 2


def test_diffused_check(capsys, tmp_path):
    code, out, _ = run(capsys, "diffused-check", "--out-dir", tmp_path)
    assert code == 0
    lines = (tmp_path / "diffused.csv").read_text().splitlines()
    assert lines[0] == "kind,x,sigma,closed_form,quadrature,abs_err" and len(lines) == 85
    worst = {l.split(":")[0]: float(l.split("=")[1]) for l in out.splitlines()}
    assert set(worst) == {"erf", "tanh", "sign", "relu"}
    for k in ("erf", "sign", "relu"):
        assert worst[k] <= 1e-6


@pytest.mark.skipif(shutil.which("routeseq") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["routeseq", "generate", *BOX, "--n", "5", "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "routes=5" in proc.stdout
    proc = subprocess.run(["routeseq", "rank"], capture_output=True, text=True)
    assert proc.returncode == 2
