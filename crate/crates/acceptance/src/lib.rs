//! Holds the acceptance suite in `tests/acceptance.rs`. Kept as a separate
//! package so that it runs after every other test target in the workspace.
