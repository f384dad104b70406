//! Compiles and runs a small C program against the generated header and
//! the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "emgwire.h"

int main(void) {
    EmgWindowCode codes[EMG_CHANNELS];
    uint8_t frame[EMG_FRAME_LEN], got[EMG_FRAME_LEN], ready = 0;
    double hz = 0.0;
    int frames = 0;
    for (int i = 0; i < EMG_CHANNELS; i++) {
        codes[i].positive = 1;
        codes[i].magnitude = 0;
    }
    if (emg_throughput(115200.0, 110.0, &hz) != EMG_STATUS_OK) return 1;
    if (emg_pack_frame(codes, frame) != EMG_STATUS_OK) return 2;
    if (frame[8] != 0xAA || frame[10] != 0xFF) return 3;
    EmgFrameSync *sync = emg_frame_sync_new();
    for (int k = 0; k < 4; k++)
        for (int i = 0; i < EMG_FRAME_LEN; i++) {
            if (emg_frame_sync_push(sync, frame[i], got, &ready) != EMG_STATUS_OK) return 4;
            if (ready && memcmp(got, frame, EMG_FRAME_LEN) == 0) frames++;
        }
    emg_frame_sync_free(sync);
    if (emg_code_to_volts(600, &hz) != EMG_STATUS_OUT_OF_RANGE) return 5;
    printf("%d %s\n", frames, emg_status_str(EMG_STATUS_BAD_MARKER));
    return 0;
}
"#;

#[test]
fn c_program_links_against_static_library() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    // Integration tests live in target/<profile>/deps; the library is one level up.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libemgwire_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "2 bad end-of-frame marker\n");
}
