# Import directly: from flows.suite import run_suite
