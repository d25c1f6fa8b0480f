"""Generate the API reference pages, their navigation and the command-line page."""

from pathlib import Path

import click
import mkdocs_gen_files
from click.testing import CliRunner

from etexshape.cli import main

nav = mkdocs_gen_files.Nav()
mod_symbol = '<code class="doc-symbol doc-symbol-nav doc-symbol-module"></code>'

package = Path(__file__).parent.parent / "src" / "etexshape"

for path in sorted(package.glob("*.py")):
    name = path.stem
    if name in ("__main__", "cli"):
        continue
    ident = "etexshape" if name == "__init__" else f"etexshape.{name}"
    doc_path = Path("index.md" if name == "__init__" else f"{name}.md")
    nav[(f"{mod_symbol} {ident}",)] = doc_path.as_posix()
    with mkdocs_gen_files.open(Path("reference", doc_path), "w") as fd:
        fd.write(f"::: {ident}")
    mkdocs_gen_files.set_edit_path(Path("reference", doc_path), ".." / path)

with mkdocs_gen_files.open("reference/SUMMARY.md", "w") as nav_file:
    nav_file.writelines(nav.build_literate_nav())

# one section per subcommand, with the same help text the terminal shows
runner = CliRunner()
with mkdocs_gen_files.open("cli.md", "w") as fd:
    fd.write("# Command line\n\n```text\n" + runner.invoke(main, ["--help"]).output + "```\n")
    assert isinstance(main, click.Group)
    for command in main.list_commands(click.Context(main)):
        help_text = runner.invoke(main, [command, "--help"]).output
        fd.write(f"\n## {command}\n\n```text\n{help_text}```\n")
