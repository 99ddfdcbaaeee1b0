//! Reporting shim for the acceptance suites: runs one numbered check, prints
//! a single PASS/FAIL line for it, and re-raises any failure so the harness
//! still records the test as failed.

use std::panic::{catch_unwind, AssertUnwindSafe};

pub fn check(number: u32, name: &str, body: impl FnOnce()) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    match &outcome {
        Ok(()) => println!("acceptance {number:02} {name}: PASS"),
        Err(cause) => {
            let msg = cause
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| cause.downcast_ref::<&str>().copied())
                .unwrap_or("panic without message");
            println!("acceptance {number:02} {name}: FAIL — {msg}");
        }
    }
    if outcome.is_err() {
        panic!("acceptance check {number:02} ({name}) failed");
    }
}
