import json

import pytest

from sanjeh.catalog import (
    ACADEMIC,
    DEFAULT_CATALOG,
    categories_of,
    label_of,
    load_catalog,
    parse_catalog,
)
from sanjeh.errors import CatalogError, ValidationError


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


@pytest.fixture
def raw():
    return json.loads(DEFAULT_CATALOG.read_text(encoding="utf-8"))


def test_bundled_catalog_sizes(catalog):
    assert len(catalog.categories) == 96
    assert [len(categories_of(catalog, d)) for d in catalog.domain_ids] == [66, 10, 10, 10]
    assert len(catalog.group_ids()) == 10


def test_categories_keep_document_order(catalog):
    academic = categories_of(catalog, ACADEMIC)
    assert academic[0].id == "aerospace_engineering"
    assert [c.id for c in categories_of(catalog, "profession")][:3] == ["engineer", "doctor", "writer"]
    assert categories_of(catalog, "color")[0].id == "pink"
    assert categories_of(catalog, "color")[-1].id == "gray"


def test_loading_twice_gives_the_same_catalog():
    first, second = load_catalog(), load_catalog()
    assert first == second
    assert [c.id for c in first.categories] == [c.id for c in second.categories]
    assert [d.id for d in first.domains] == [d.id for d in second.domains]


def test_every_academic_field_has_a_group(catalog):
    for c in categories_of(catalog, ACADEMIC):
        assert c.group in catalog.group_ids()
    for c in categories_of(catalog, "sport"):
        assert c.group is None


def test_editorial_field_is_flagged(catalog):
    assert catalog.category("statistics").editorial
    assert not catalog.category("aerospace_engineering").editorial


def test_label_of(catalog):
    nurse = catalog.category("nurse")
    assert label_of(nurse, "en") == "nurse"
    assert label_of(nurse, "fa")
    with pytest.raises(CatalogError, match="language not configured: 'de'"):
        label_of(nurse, "de")


def test_unknown_domain(catalog):
    with pytest.raises(CatalogError, match="unknown domain"):
        categories_of(catalog, "cuisine")


def test_missing_profession_is_reported(raw):
    raw["categories"] = [c for c in raw["categories"] if c["id"] != "plumber"]
    with pytest.raises(CatalogError, match="profession: expected 10, found 9"):
        parse_catalog(json.dumps(raw))


def test_duplicate_category_id(raw):
    raw["categories"].append(dict(raw["categories"][-1]))
    with pytest.raises(CatalogError, match="duplicate category id"):
        parse_catalog(json.dumps(raw))


def test_missing_label_for_configured_language(raw):
    raw["categories"][0]["labels"].pop("fa")
    with pytest.raises(CatalogError, match="missing labels"):
        parse_catalog(json.dumps(raw))


def test_malformed_json_names_the_position():
    with pytest.raises(CatalogError, match="line 1, column"):
        parse_catalog('{"version": ')


def test_catalog_errors_are_validation_errors(tmp_path):
    with pytest.raises(ValidationError):
        load_catalog(tmp_path / "absent.json")
