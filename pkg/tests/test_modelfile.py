"""Modelfile parsing: grammar, diagnostics, placeholders, shipped files."""

import math
import pathlib

import pytest

import contopt
from contopt import transcription
from contopt.finprog import solve_lp
from contopt.modelfile import Diag, is_diagnostics, parse_model

FILES = pathlib.Path(__file__).resolve().parents[1] / "modelfiles"


def parse_ok(text, **kw):
    res = parse_model(text, **kw)
    assert not is_diagnostics(res), "\n".join(str(d) for d in res)
    return res


def parse_bad(text, **kw):
    res = parse_model(text, **kw)
    assert is_diagnostics(res)
    return res


def solve_scalar(text):
    # one finite variable pinned by an equality; returns its optimal value
    model = parse_ok(text)
    prog, tmap = transcription.transcribe(model)
    sol = solve_lp(prog)
    assert sol.status == "optimal"
    return sol.x[0]


# -- grammar ---------------------------------------------------------------


def test_power_binds_tighter_than_unary_minus():
    v = solve_scalar(
        "[vars]\nx = finite bounds=[-100, 100]\n"
        "[constraints]\nx == -2^2\n[objective]\nmin x\n")
    assert v == pytest.approx(-4.0)


def test_power_right_associative():
    v = solve_scalar(
        "[vars]\nx = finite bounds=[0, 1000]\n"
        "[constraints]\nx == 2^3^2\n[objective]\nmin x\n")
    assert v == pytest.approx(512.0)


def test_division_left_associative():
    v = solve_scalar(
        "[vars]\nx = finite bounds=[0, 100]\n"
        "[constraints]\nx == 6/2*3\n[objective]\nmin x\n")
    assert v == pytest.approx(9.0)


def test_negative_exponent():
    v = solve_scalar(
        "[vars]\nx = finite bounds=[0, 100]\n"
        "[constraints]\nx == 4 * 2^-2\n[objective]\nmin x\n")
    assert v == pytest.approx(1.0)


def test_constant_rhs_is_kept_as_rhs():
    model = parse_ok(
        "[vars]\nx = finite\n[constraints]\npin: x == 3 + 4\n"
        "[objective]\nmin x\n")
    prog, _ = transcription.transcribe(model)
    row = next(r for r in prog.constraints if r.label.startswith("pin"))
    assert row.rhs == pytest.approx(7.0)


def test_defs_splice_into_expressions():
    v = solve_scalar(
        "[vars]\nx = finite bounds=[-10, 10]\n"
        "[defs]\ntwice = 2*x\n"
        "[constraints]\ntwice + 1 == 7\n[objective]\nmin x\n")
    assert v == pytest.approx(3.0)


def test_comments_and_blank_lines_ignored():
    parse_ok(
        "# leading comment\n\n[vars]\n"
        "x = finite  # trailing comment\n\n"
        "[objective]\nmin x^2\n")


# -- diagnostics -----------------------------------------------------------


def test_empty_file_missing_objective():
    diags = parse_bad("")
    assert len(diags) == 1
    assert diags[0].line == 0
    assert "missing objective" in diags[0].message


def test_unknown_name_positioned():
    diags = parse_bad("[vars]\nx = finite\n[objective]\nmin x + bogus\n")
    d = next(d for d in diags if "bogus" in d.message)
    assert d.line == 4
    assert d.col == 9


def test_bad_line_yields_diagnostics_not_model():
    # the objective itself is fine; the broken vars line must still win
    res = parse_model("[vars]\nx = finite bounds=[1,\n[objective]\nmin x\n")
    assert is_diagnostics(res)


def test_diag_str_format():
    diags = parse_bad("[objective]\nmin nope\n")
    assert str(diags[0]).startswith("2:")
    assert ":" in str(diags[0])


def test_content_before_section_header():
    diags = parse_bad("x = finite\n[objective]\nmin 1\n")
    assert any("section" in d.message for d in diags)


def test_unknown_section():
    diags = parse_bad("[stuff]\na = 1\n[objective]\nmin 1\n")
    assert any("stuff" in d.message for d in diags)


def test_duplicate_names_rejected():
    diags = parse_bad(
        "[vars]\nx = finite\nx = finite\n[objective]\nmin x\n")
    assert any("x" in d.message and d.line == 3 for d in diags)


def test_declare_before_use():
    diags = parse_bad(
        "[constraints]\ny >= 0\n[vars]\ny = finite\n[objective]\nmin y\n")
    assert any(d.line == 2 for d in diags)


def test_max_cvar_rejected():
    diags = parse_bad(
        "[params]\nt = interval(0, 1) supports=3\n"
        "[vars]\ny = infinite(t)\n"
        "[objective]\nmax cvar(y, t; alpha=0.5)\n")
    assert any("minimiz" in d.message for d in diags)


def test_cvar_outside_objective_rejected():
    diags = parse_bad(
        "[params]\nt = interval(0, 1) supports=3\n"
        "[vars]\ny = infinite(t)\n"
        "[constraints]\ncvar(y, t; alpha=0.5) <= 1\n"
        "[objective]\nmin 0\n")
    assert any("cvar" in d.message for d in diags)


# -- placeholders and overrides --------------------------------------------


PLACEHOLDER = (
    "[vars]\nx = finite bounds=[0, 10]\n"
    "[constraints]\nx >= $floor\n[objective]\nmin x\n")


def test_placeholder_missing_names_flag():
    diags = parse_bad(PLACEHOLDER)
    assert any("--floor" in d.message for d in diags)


def test_placeholder_from_cli():
    model = parse_ok(PLACEHOLDER, placeholders={"floor": 2.5})
    prog, _ = transcription.transcribe(model)
    assert solve_lp(prog).x[0] == pytest.approx(2.5)


def test_placeholder_options_default_and_cli_override():
    text = "[options]\nfloor = 1.0\n" + PLACEHOLDER
    model = parse_ok(text)
    prog, _ = transcription.transcribe(model)
    assert solve_lp(prog).x[0] == pytest.approx(1.0)
    model = parse_ok(text, placeholders={"floor": 4.0})
    prog, _ = transcription.transcribe(model)
    assert solve_lp(prog).x[0] == pytest.approx(4.0)


def test_num_supports_override():
    text = ("[params]\nt = interval(0, 1) supports=9\n"
            "[vars]\ny = infinite(t)\n[objective]\nmin integral(y^2, t)\n")
    model = parse_ok(text, num_supports={"t": 4})
    _, tmap = transcription.transcribe(model)
    t = next(h for h, p in model.params.items() if p.label == "t")
    assert tmap.supports(t).shape == (4, 1)


def test_seed_override_changes_samples():
    text = ("[params]\nxi = normal(0, 1) samples=6 seed=1\n"
            "[vars]\ny = infinite(xi)\n[objective]\nmin expect(y^2, xi)\n")
    m1 = parse_ok(text)
    m2 = parse_ok(text, seed=99)
    xi1 = next(h for h, p in m1.params.items() if p.label == "xi")
    xi2 = next(h for h, p in m2.params.items() if p.label == "xi")
    _, t1 = transcription.transcribe(m1)
    _, t2 = transcription.transcribe(m2)
    assert t1.supports(xi1).shape == (6, 1)
    assert (t1.supports(xi1) != t2.supports(xi2)).any()


def test_unknown_option_rejected():
    diags = parse_bad(
        "[options]\nwibble = 3\n[vars]\nx = finite\n[objective]\nmin x\n")
    assert any("wibble" in d.message for d in diags)


def test_known_options_collected():
    model = parse_ok(
        "[options]\ncap = 500\ntol_feas = 1e-9\n"
        "[vars]\nx = finite\n[objective]\nmin x^2\n")
    assert model.file_options["cap"] == 500
    assert model.file_options["tol_feas"] == pytest.approx(1e-9)


# -- functions -------------------------------------------------------------


def test_sigmoid_function_value():
    model = parse_ok(
        "[params]\nt = interval(0, 10) supports=3\n"
        "[functions]\nf = sigmoid(t, 2, 1, 1, 0.5, 4)\n"
        "[vars]\ny = infinite(t) start=f\n"
        "[objective]\nmin integral((y - f)^2, t)\n")
    fh = next(h for h, f in model.functions.items() if f.label == "f")
    got = model.func_value(fh, {next(iter(model.params)): (6.0,)})
    want = 2.0 / (1.0 + 1.0 * math.exp(0.5 * (6.0 - 4.0)))
    assert got == pytest.approx(want, rel=1e-12)


def test_table_function_interpolates():
    model = parse_ok(
        "[params]\nt = interval(0, 4) supports=5\n"
        "[functions]\ng = table(t, [0, 2, 4], [1, 3, 2])\n"
        "[vars]\ny = infinite(t)\n"
        "[objective]\nmin integral((y - g)^2, t)\n")
    gh = next(h for h, f in model.functions.items() if f.label == "g")
    th = next(iter(model.params))
    assert model.func_value(gh, {th: (1.0,)}) == pytest.approx(2.0)
    assert model.func_value(gh, {th: (3.0,)}) == pytest.approx(2.5)


def test_table_needs_increasing_xs():
    diags = parse_bad(
        "[params]\nt = interval(0, 4) supports=3\n"
        "[functions]\ng = table(t, [0, 2, 2], [1, 3, 2])\n"
        "[vars]\ny = infinite(t)\n[objective]\nmin integral(y, t)\n")
    assert any("increasing" in d.message for d in diags)


def test_table_length_mismatch():
    diags = parse_bad(
        "[params]\nt = interval(0, 4) supports=3\n"
        "[functions]\ng = table(t, [0, 2], [1, 3, 2])\n"
        "[vars]\ny = infinite(t)\n[objective]\nmin integral(y, t)\n")
    assert diags


def test_function_start_profile_reaches_instances():
    model = parse_ok(
        "[params]\nt = interval(0, 2) supports=3\n"
        "[functions]\ng = table(t, [0, 2], [5, 9])\n"
        "[vars]\ny = infinite(t) bounds=[0, 20] start=g\n"
        "[objective]\nmin integral(y, t)\n")
    prog, _ = transcription.transcribe(model)
    starts = [v.start for v in prog.variables if v.label.startswith("y[")]
    assert starts == pytest.approx([5.0, 7.0, 9.0])


# -- restrictions and applications -----------------------------------------


def test_point_restriction():
    text = ("[params]\nt = interval(0, 1) supports=5\n"
            "[vars]\ny = infinite(t) bounds=[0, 10]\n"
            "[constraints]\nic: y == 3 @ t = 0\n"
            "[objective]\nmin integral(y, t)\n")
    model = parse_ok(text)
    prog, _ = transcription.transcribe(model)
    rows = [r for r in prog.constraints if r.label.startswith("ic")]
    assert len(rows) == 1


def test_range_restriction():
    text = ("[params]\nt = interval(0, 1) supports=5\n"
            "[vars]\ny = infinite(t) bounds=[0, 10]\n"
            "[constraints]\nmid: y >= 1 @ t in [0.25, 0.75]\n"
            "[objective]\nmin integral(y, t)\n")
    model = parse_ok(text)
    prog, _ = transcription.transcribe(model)
    # supports 0, .25, .5, .75, 1; three fall inside the closed range
    rows = [r for r in prog.constraints if r.label.startswith("mid")]
    assert len(rows) == 3


def test_variable_application():
    text = ("[params]\nt = interval(0, 1) supports=3\n"
            "[vars]\ny = infinite(t) bounds=[-10, 10]\n"
            "[constraints]\nend: y(t=1) == 4\n"
            "[objective]\nmin integral((y - 2)^2, t)\n")
    model = parse_ok(text)
    prog, tmap = transcription.transcribe(model)
    assert any(r.label.startswith("end") for r in prog.constraints)


def test_application_at_nonsupport_is_an_error():
    text = ("[params]\nt = interval(0, 1) supports=3\n"
            "[vars]\ny = infinite(t)\n"
            "[constraints]\ny(t=0.3) == 1\n"
            "[objective]\nmin integral(y, t)\n")
    model = parse_ok(text)   # parse is fine; the point check is structural
    with pytest.raises(contopt.errors.OutOfDomain):
        transcription.transcribe(model)


def test_component_index_is_one_based():
    text = ("[params]\nxi = mvnormal([1, 2], [0.5, 0.5]) samples=4 seed=3\n"
            "[vars]\ny = infinite(xi)\n"
            "[constraints]\ny >= xi[2]\n"
            "[objective]\nmin expect(y, xi)\n")
    parse_ok(text)
    diags = parse_bad(text.replace("xi[2]", "xi[3]"))
    assert any("component" in d.message for d in diags)


# -- events ----------------------------------------------------------------


EVENT_TEXT = (
    "[params]\nxi = normal(0, 1) samples=8 seed=5\n"
    "[vars]\ny = infinite(xi) bounds=[-20, 20]\n"
    "[events]\nlow = atom y <= 2\nhigh = atom -y <= 2\n"
    "band = event (and low high) alpha=0.5 direction=at-least bigM=50\n"
    "[objective]\nmin expect((y - 1)^2, xi)\n")


def test_event_reformulation_attached():
    model = parse_ok(EVENT_TEXT)
    assert set(model.file_events) == {"band"}
    ev = model.file_events["band"]
    assert ev.alpha == pytest.approx(0.5)
    # a joint And shares one binary variable, instanced per sample
    assert len(ev.reformulation.binaries) == 1
    prog, _ = transcription.transcribe(model)
    assert sum(v.integrality == "binary" for v in prog.variables) == 8


def test_event_at_most_direction():
    # at-most takes violation atoms: P(y strays above 2) <= 0.5
    model = parse_ok(
        "[params]\nxi = normal(0, 1) samples=8 seed=5\n"
        "[vars]\ny = infinite(xi) bounds=[-20, 20]\n"
        "[events]\nstray = atom y > 2\n"
        "cap = event (or stray) alpha=0.5 direction=at-most bigM=50\n"
        "[objective]\nmin expect((y - 1)^2, xi)\n")
    assert model.file_events["cap"].direction == "at-most"


def test_event_bad_atom_form_for_direction():
    diags = parse_bad(EVENT_TEXT.replace("atom y <= 2", "atom y > 2"))
    assert any("satisfaction" in d.message for d in diags)


def test_event_bad_direction():
    diags = parse_bad(EVENT_TEXT.replace("at-least", "sideways"))
    assert any("direction" in d.message for d in diags)


def test_event_unknown_atom():
    diags = parse_bad(
        "[params]\nxi = normal(0, 1) samples=4 seed=5\n"
        "[vars]\ny = infinite(xi)\n"
        "[events]\nev = event (and missing) alpha=0.5\n"
        "[objective]\nmin expect(y, xi)\n")
    assert any("missing" in d.message for d in diags)


def test_event_needs_alpha():
    diags = parse_bad(
        "[params]\nxi = normal(0, 1) samples=4 seed=5\n"
        "[vars]\ny = infinite(xi) bounds=[0, 5]\n"
        "[events]\na = atom y <= 2\nev = event (and a)\n"
        "[objective]\nmin expect(y, xi)\n")
    assert any("alpha" in d.message for d in diags)


# -- shipped files ---------------------------------------------------------


def shipped(name):
    return (FILES / name).read_text()


def test_pandemic_file_structure():
    model = parse_ok(shipped("pandemic.mod"), placeholders={"alpha": 0.9})
    infinite = {v.label: v for v in model.variables.values()
                if v.kind == "infinite" and not v.label.startswith("d")}
    states = {"ys", "ye", "yi", "yr"}
    assert states <= set(infinite)
    for s in states:
        assert len(infinite[s].deps) == 2
    assert len(infinite["yu"].deps) == 1
    assert model.objective is not None
    assert model.objective_sense == "min"
    # yi carries the outbreak cap
    assert infinite["yi"].ub == pytest.approx(0.02)


def test_pandemic_placeholder_default():
    # the file ships a default alpha in [options], so no flag is needed
    parse_ok(shipped("pandemic.mod"))


def test_powergrid_file_structure():
    model = parse_ok(shipped("powergrid.mod"))
    assert len(model.file_events) == 1
    ev = next(iter(model.file_events.values()))
    assert ev.alpha == pytest.approx(0.95)
    assert len(ev.reformulation.binaries) == 1
    prog, _ = transcription.transcribe(model)
    assert sum(v.integrality == "binary" for v in prog.variables) == 20


def test_logistic_file_solves():
    from contopt.finprog import solve_nlp
    model = parse_ok(shipped("logistic.mod"))
    prog, _ = transcription.transcribe(model)
    sol = solve_nlp(prog)
    assert sol.status == "optimal"
    assert sol.objective < 0.01
