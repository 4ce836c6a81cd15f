//! Benchmark harness: task suites, answer extraction, scoring, multi-trial
//! runs and a generator for logic-grid puzzles.

pub mod extract;
pub mod oracle;
pub mod puzzle;
pub mod runner;
pub mod score;
pub mod task;

pub use extract::{extract_mcq, parse_grid, NoAnswerFound};
pub use puzzle::{brute_solve, count_solutions, gen_puzzle, Clue, GeneratedPuzzle, PuzzleError, ValueRef};
pub use runner::{run_benchmark, BenchOptions, BenchReport, Strategy};
pub use score::{score, Failure, Verdict};
pub use task::{load_tasks, LoadedSuite, Split, Task, TaskFormat};
