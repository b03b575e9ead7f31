# taskbench
