//! Placeholder, implemented in a later step.

pub fn run() -> i32 {
    0
}
