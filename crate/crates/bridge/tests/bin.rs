use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

#[tokio::test]
async fn bridge_binary_serves_state() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_bridge"))
        .args(["--device", "sim", "--port", "0", "--connect"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line
        .split_whitespace()
        .find(|w| w.starts_with("http://"))
        .unwrap_or_else(|| panic!("no address in `{line}`"))
        .to_owned();
    let state: serde_json::Value = reqwest::get(format!("{url}/api/state")).await.unwrap().json().await.unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(state["connected"], true);
    assert_eq!(state["device"], "sim");
}

#[test]
fn bridge_rejects_bad_device_spec() {
    let out = Command::new(env!("CARGO_BIN_EXE_bridge")).args(["--device", "usb"]).output().unwrap();
    assert!(!out.status.success());
}
