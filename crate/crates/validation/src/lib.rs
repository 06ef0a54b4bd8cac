//! Acceptance criteria of the workspace, run by `cargo test -p tbqkd-validation --test acceptance`.
