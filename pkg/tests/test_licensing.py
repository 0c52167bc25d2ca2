from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from licensegraph.errors import OutOfMatrix, SchemaViolation
from licensegraph.index import record_from_json
from licensegraph.licensing import (Compatibility, CompatibilityMatrix, FileTreeDetector,
                                    KeywordFileScanner, LicenseCategory, LicenseInfo,
                                    LicenseNormalizer, Step, SubprocessScanner,
                                    build_field_mapping, categorize, is_incompatible,
                                    lint_permissive_source, lint_self_compatibility,
                                    load_matrix, load_tables, normalize_license)

MIT_C = "License :: OSI Approved :: MIT License"
APACHE_C = "License :: OSI Approved :: Apache Software License"
GPL3_C = "License :: OSI Approved :: GNU General Public License v3 (GPLv3)"
GPL3P_C = "License :: OSI Approved :: GNU General Public License v3 or later (GPLv3+)"
LGPL3_C = "License :: OSI Approved :: GNU Lesser General Public License v3 (LGPLv3)"
BSD_C = "License :: OSI Approved :: BSD License"
MPL_C = "License :: OSI Approved :: Mozilla Public License 2.0 (MPL 2.0)"


def make(i, field=None, classifiers=(), spdx=None):
    return record_from_json({"name": f"pkg{i}", "version": "1.0", "upload_time": 0,
                             "license": field, "classifiers": list(classifiers), "spdx": spdx})


def synthetic_corpus():
    """100 records with known license and the step expected to identify it."""
    rows = []
    # classifier wins even when the field says something else
    classifier_cases = [(MIT_C, "MIT"), (APACHE_C, "Apache-2.0"), (GPL3_C, "GPL-3.0-only"),
                        (GPL3P_C, "GPL-3.0-or-later"), (LGPL3_C, "LGPL-3.0-only"),
                        (BSD_C, "BSD-3-Clause"), (MPL_C, "MPL-2.0")]
    misleading = ["GNU GPL", "Apache v2", "Apache v2", "Apache v2", "BSD", "", None, "MIT", "See classifiers", None]
    for i in range(35):
        classifier, spdx = classifier_cases[i % len(classifier_cases)]
        field = misleading[i % len(misleading)]
        if field == "Apache v2":
            classifier, spdx = APACHE_C, "Apache-2.0"
        rows.append((field, [classifier, "Programming Language :: Python"], None, spdx, Step.CLASSIFIER))
    # learned field mapping: "Apache v2" co-occurs with the Apache classifier above
    for i in range(15):
        rows.append(("Apache v2", [], None, "Apache-2.0", Step.FIELD))
    # keyword rules for spellings never seen next to a classifier
    keyword_cases = [("Apache Version 2", "Apache-2.0"), ("Apache 2", "Apache-2.0"),
                     ("GNU GPLv3", "GPL-3.0-only"), ("GPL v3 or later", "GPL-3.0-or-later"),
                     ("The MIT License", "MIT"), ("LGPLv3", "LGPL-3.0-only"),
                     ("Mozilla Public License 2.0", "MPL-2.0"), ("new BSD", "BSD-3-Clause"),
                     ("GNU Affero GPL v3", "AGPL-3.0-only"), ("ISC license", "ISC")]
    for i in range(30):
        field, spdx = keyword_cases[i % len(keyword_cases)]
        rows.append((field, [], None, spdx, Step.KEYWORD))
    # pre-normalized dumps short-circuit everything
    for i in range(5):
        rows.append(("whatever", [GPL3_C], "MIT", "MIT", Step.SPDX))
    # nothing usable
    for field in ["", None, "Proprietary", "see LICENSE", "Custom", "GPL", "UNKNOWN", "n/a"]:
        rows.append((field, [], None, None, Step.NONE))
    # two license classifiers are not modelled
    for _ in range(7):
        rows.append((None, [MIT_C, GPL3_C], None, None, Step.CLASSIFIER))
    records = [make(i, f, c, s) for i, (f, c, s, _, _) in enumerate(rows)]
    truth = [(spdx, step) for (_, _, _, spdx, step) in rows]
    return records, truth


def test_corpus_ground_truth_and_precedence():
    records, truth = synthetic_corpus()
    assert len(records) == 100
    infos = LicenseNormalizer().fit_transform(records)
    for record, info, (spdx, step) in zip(records, infos, truth):
        assert (info.spdx, info.step) == (spdx, step), (record.license_field, record.classifiers)
    # precedence: once a classifier exists, later steps never fire
    for record, info in zip(records, infos):
        if record.classifier_licenses and not record.spdx_hint:
            assert info.step is Step.CLASSIFIER


def test_pipeline_is_deterministic():
    records, _ = synthetic_corpus()
    a = LicenseNormalizer().fit_transform(records)
    b = LicenseNormalizer().fit_transform(list(reversed(records)))
    assert [(x.spdx, x.step) for x in a] == [(x.spdx, x.step) for x in reversed(b)]


def test_multi_license_diagnostic():
    info = normalize_license(make(0, None, [MIT_C, GPL3_C]), load_tables())
    assert not info.known and info.diagnostic == "multi-license"


def test_field_mapping_majority_and_ties():
    tables = load_tables()
    records = [make(i, "Apache v2", [APACHE_C]) for i in range(3)] + [make(3, "Apache v2", [GPL3_C])]
    records += [make(4, "weird", [MIT_C]), make(5, "weird", [BSD_C])]
    records += [make(6, "lonely")]
    mapping = build_field_mapping(records, tables)
    assert mapping["Apache v2"] == "Apache-2.0"
    assert mapping["weird"] == "BSD-3-Clause"
    assert "lonely" not in mapping


@pytest.mark.parametrize("field,expected", [
    ("Apache v2", "Apache-2.0"), ("Apache Version 2", "Apache-2.0"), ("Apache 2", "Apache-2.0"),
    ("GPLv3", "GPL-3.0-only"), ("GPL v3+", "GPL-3.0-or-later"), ("BSD", "BSD-3-Clause"),
    ("GPL", None), ("", None),
])
def test_keyword_spellings(field, expected):
    assert normalize_license(make(0, field), load_tables()).spdx == expected


def test_anchored_matrix_facts(matrix):
    gpl3, apache = LicenseInfo("GPL-3.0-only"), LicenseInfo("Apache-2.0")
    gpl2 = LicenseInfo("GPL-2.0-only")
    assert is_incompatible(gpl3, apache, matrix) is Compatibility.INCOMPATIBLE
    assert is_incompatible(apache, gpl2, matrix) is Compatibility.INCOMPATIBLE
    assert is_incompatible(gpl2, apache, matrix) is Compatibility.INCOMPATIBLE
    assert is_incompatible(LicenseInfo("MIT"), LicenseInfo("MIT"), matrix) is Compatibility.COMPATIBLE
    assert is_incompatible(LicenseInfo(), apache, matrix) is Compatibility.UNKNOWN
    assert categorize(LicenseInfo("MIT"), matrix) is LicenseCategory.PERMISSIVE
    assert categorize(LicenseInfo("LGPL-3.0-only"), matrix) is LicenseCategory.WEAK_COPYLEFT
    assert categorize(LicenseInfo("GPL-3.0-only"), matrix) is LicenseCategory.STRONG_COPYLEFT
    assert categorize(LicenseInfo(), matrix) is LicenseCategory.UNKNOWN


def test_out_of_matrix(matrix):
    with pytest.raises(OutOfMatrix):
        is_incompatible(LicenseInfo("WTFPL"), LicenseInfo("MIT"), matrix)
    with pytest.raises(OutOfMatrix):
        categorize(LicenseInfo("WTFPL"), matrix)


def test_deprecated_ids_normalize(matrix):
    assert LicenseInfo.from_text("GPL-2.0+").spdx == "GPL-2.0-or-later"
    assert is_incompatible(LicenseInfo.from_text("GPL-3.0+"), LicenseInfo("MIT"), matrix) \
        is Compatibility.INCOMPATIBLE


def test_matrix_self_compatibility(matrix):
    assert lint_self_compatibility(matrix) == []
    for l in matrix.licenses:
        assert is_incompatible(LicenseInfo(l), LicenseInfo(l), matrix) is Compatibility.COMPATIBLE


def test_matrix_is_one_way(matrix):
    assert matrix.pair_incompatible("GPL-3.0-only", "MIT")
    assert not matrix.pair_incompatible("MIT", "GPL-3.0-only")


def test_permissive_source_lint(matrix):
    # the only permissive license that cannot go everywhere is Apache-2.0 under GPL-2.0-only
    assert lint_permissive_source(matrix) == [("Apache-2.0", "GPL-2.0-only")]


def test_self_pair_is_rejected_on_load(tmp_path):
    doc = {"licenses": ["MIT", "X"], "categories": {"MIT": "permissive", "X": "strong"},
           "incompatible": [["X", "X"]]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaViolation):
        load_matrix(path)


def test_matrix_loads_user_file(tmp_path, matrix):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(matrix.to_dict()))
    again = load_matrix(path)
    assert again.incompatible_pairs == matrix.incompatible_pairs
    assert again.categories == matrix.categories


def test_detector_hook(tmp_path):
    tree = tmp_path / "pkg"
    tree.mkdir()
    (tree / "LICENSE").write_text("GNU GENERAL PUBLIC LICENSE\nVersion 3, 29 June 2007\n")
    tables = load_tables()
    detector = FileTreeDetector(lambda record: tree, KeywordFileScanner(tables))
    info = normalize_license(make(0, "see LICENSE"), tables, detector)
    assert (info.spdx, info.step) == ("GPL-3.0-only", Step.DETECTOR)


def test_detector_failure_degrades(caplog):
    def broken(record):
        raise RuntimeError("scanner crashed")

    info = normalize_license(make(0, "see LICENSE"), load_tables(), broken)
    assert not info.known
    assert "scanner crashed" in caplog.text


def test_subprocess_scanner(tmp_path):
    scanner = SubprocessScanner(f"{sys.executable} -c \"print('MIT')\" {{path}}")
    assert scanner(tmp_path) == "MIT"


def test_normalizer_params():
    normalizer = LicenseNormalizer()
    assert set(normalizer.get_params()) == {"tables", "detector"}
    with pytest.raises(RuntimeError):
        normalizer.transform([])
