#!/usr/bin/env python3
from datetime import date
from pathlib import Path

from maskdb import __version__

# region project meta
project = "maskdb"
copyright = "{}, maskdb maintainers".format(date.today().year)
author = "maskdb maintainers"

version = __version__
release = version
# endregion project meta

# paths
_docs_src = Path(__file__).parent.resolve()
_root_dir = _docs_src.parent
_package_src = _root_dir / "src/maskdb"
# endregion paths

# extensions
extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "myst_parser",
]
# endregion extensions

# sphinx setup
source_suffix = [".rst", ".md"]
root_doc = "index"
language = "en"
exclude_patterns = ["_build"]
# endregion sphinx setup

# html config
html_show_sphinx = False
html_theme = "furo"
# endregion html config

# region autodoc config
autoclass_content = "both"
autodoc_mock_imports = ["openfhe", "redis"]
# endregion autodoc config

# region napoleon config
napoleon_google_docstring = True
napoleon_include_init_with_doc = True
napoleon_include_private_with_doc = False
napoleon_preprocess_types = True
napoleon_attr_annotations = True
# endregion napoleon config


def run_apidoc(_) -> None:
    """Runs sphinx-apidoc when the builder is inited."""
    from sphinx.ext.apidoc import main as apidoc_exec

    exclude_patterns = (
        _package_src / "__main__.py",
        _package_src / "version.py",
    )
    apidoc_exec(
        [
            "--separate",
            "--module-first",
            "--force",
            f"-o={_docs_src}",
            f"{_package_src}",
            *map(str, exclude_patterns),
        ]
    )


def setup(app) -> None:
    app.connect("builder-inited", run_apidoc)
