"""Case studies: chance-constrained dispatch, outbreak control, community estimation."""

from . import community, pandemic, powergrid


def run_case_study(name, **flags):
    """Run one bundled case study and return its report dict.

    Names: "sopf" (4-bus chance-constrained dispatch), "pandemic"
    (SEIR outbreak control under uncertainty), "glv" (community dynamics
    parameter estimation). Flags are forwarded to the case's run().
    """
    runners = {"sopf": powergrid.run, "pandemic": pandemic.run,
               "glv": community.run}
    try:
        runner = runners[name]
    except KeyError:
        raise ValueError(
            f"unknown case study '{name}'; pick one of {sorted(runners)}") from None
    return runner(**flags)
