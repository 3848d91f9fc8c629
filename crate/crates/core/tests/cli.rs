use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noncollision"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn spectrum_rows_agree() {
    let o = run(&["spectrum", "--n", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,closed_form,numeric,abs_err"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let err: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-10);
    }
}

#[test]
fn group_reports_passing_checks() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(
        dir.path(),
        "s.scene",
        "flavor continuous\nrect 0 1 0 1\nrect 4 5 0 1\nrect 20 22 3 4\nparticle 10 10\nparticle 13 10\n",
    );
    let out = dir.path().join("g.csv");
    let o = run(&[
        "group",
        "--scene",
        &scene,
        "--sigma",
        "3.5",
        "--sigma-prime",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("a,b,c,d\n0,5,0,1\n20,22,3,4\n"), "{text}");
    for check in [
        "perimeter_inequality=true",
        "shadow_preservation=true",
        "composition=true",
    ] {
        assert!(text.contains(check), "{text}");
    }
}

#[test]
fn invalid_scenes_exit_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let close = write(
        dir.path(),
        "close.scene",
        "flavor lattice\nrect 0 1 0 1\nrect 3 4 0 1\nparticle 20 20\nparticle 30 30\n",
    );
    let o = run(&["estimate", "--scene", &close, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inf d_inf(R_i,R_j) > 3"));

    let empty = write(dir.path(), "empty.scene", "# nothing here\n");
    let o = run(&["estimate", "--scene", &empty, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("particles"));

    let bad = write(
        dir.path(),
        "bad.scene",
        "flavor lattice\nparticle 0 0\nparticle 0\n",
    );
    let o = run(&["simulate", "--scene", &bad, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    // randomized commands insist on a seed
    let ok = write(
        dir.path(),
        "ok.scene",
        "flavor lattice\nhorizon 5\nparticle 0 0\nparticle 2 0\n",
    );
    assert_eq!(run(&["estimate", "--scene", &ok]).status.code(), Some(1));
    // unbounded run without a stopping rule
    let unbounded = write(
        dir.path(),
        "inf.scene",
        "flavor lattice\nparticle 0 0\nparticle 2 0\n",
    );
    assert_eq!(
        run(&["simulate", "--scene", &unbounded, "--seed", "1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["bound", "--n", "1", "--p", "2", "--c0", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn estimate_is_reproducible_and_overwrites() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(
        dir.path(),
        "s.scene",
        "flavor lattice\nhorizon 30\nparticle 0 0\nparticle 2 0\n",
    );
    let out = dir.path().join("e.csv");
    let args = [
        "estimate",
        "--scene",
        &scene,
        "--seed",
        "4",
        "--replicas",
        "500",
        "--grid",
        "5,30",
        "--out",
    ];
    let mut contents = Vec::new();
    for threads in ["1", "2"] {
        let o = run(&[&["--threads", threads], &args[..], &[out.to_str().unwrap()]].concat());
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty(), "data must only go to the output file");
        contents.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(contents[0], contents[1]);
    assert_eq!(contents[0].lines().count(), 3);
    assert!(contents[0].starts_with("T,N,survivors,p_hat,ci_low,ci_high,seed\n5,500,"));
}

#[test]
fn trace_dumps_unit_moves() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(
        dir.path(),
        "s.scene",
        "flavor lattice\nhorizon 10\nparticle 0 0\nparticle 5 0\n",
    );
    let trace = dir.path().join("t.csv");
    let o = run(&[
        "simulate",
        "--scene",
        &scene,
        "--seed",
        "8",
        "--replicas",
        "1",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,particle_id,x,y"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 2);
    let mut last = [(0.0, 0.0), (5.0, 0.0)];
    for row in &rows[2..] {
        let i = row[1] as usize;
        assert_eq!((row[2] - last[i].0).abs() + (row[3] - last[i].1).abs(), 1.0);
        last[i] = (row[2], row[3]);
    }
    // the replica-0 record agrees with the trace
    let records = stdout(&o);
    let rec: Vec<&str> = records.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(rec[4].parse::<usize>().unwrap(), rows.len() - 2);
}

#[test]
fn bound_line() {
    let o = run(&[
        "bound",
        "--n",
        "2",
        "--p",
        "2",
        "--c0",
        "1",
        "--flavor",
        "continuous",
        "--dim",
        "3",
        "--a",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let get = |k: &str| {
        row[header.iter().position(|h| *h == k).unwrap()]
            .parse::<f64>()
            .unwrap()
    };
    assert!((get("nu") - 64.0 * 2f64.ln()).abs() < 1e-9);
    assert!((get("T0") - get("nu").powi(2)).abs() < 1e-6);
    assert!((get("higher_dim_bound") - 0.25).abs() < 1e-15);
}

#[test]
fn oracle_and_certify() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(
        dir.path(),
        "s.scene",
        "flavor lattice\nhorizon 0\nparticle 0 0\nparticle 2 0\n",
    );
    let o = run(&["oracle", "--scene", &scene, "--radius", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("0,1,0,"));

    let o = run(&["certify", "--n", "2", "--seed", "1", "--samples", "50"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 51);
    assert!(!stdout(&o).contains("true"));
    let o = run(&[
        "certify",
        "--n",
        "3",
        "--seed",
        "1",
        "--samples",
        "200",
        "--mode",
        "h",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("true"));
}

#[test]
fn kest_comparison_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(
        dir.path(),
        "k.scene",
        "flavor continuous\nfixed 0 0\nparticle 4 0\nparticle 2 3.4641016151377544\n",
    );
    let o = run(&[
        "estimate",
        "--scene",
        &scene,
        "--seed",
        "2",
        "--replicas",
        "200",
        "--exit-radius",
        "8",
        "--a",
        "4",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("holds=true"));
}
