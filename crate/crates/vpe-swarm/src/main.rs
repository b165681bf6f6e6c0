use std::process::ExitCode;

fn main() -> ExitCode {
    vpe_swarm::harness::run()
}
