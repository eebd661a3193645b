"""Reader and writer for the xml cascade schema of the common open source training tools.

Only the "new" boosted schema with `featureType` LBP is accepted. Every weak classifier
is a categorical stump whose `internalNodes` hold `left right featureIndex` followed by
eight 32 bit mask words; bit `c` of the LUT is bit `c % 32` of word `c // 32`.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET  # noqa: N817

from .model import CascadeFormatError, CascadeModel, MBLBPFeature, Stage, UnsupportedFeatureError, WeakClassifier

__all__ = ["parse_standard_xml", "serialize_standard_xml", "lut_from_masks", "lut_to_masks"]


def lut_from_masks(masks: list[int]) -> int:
    if len(masks) != 8:
        raise ValueError(f"Expected 8 mask words: {len(masks)} found")
    return sum((word & 0xFFFFFFFF) << (32 * k) for k, word in enumerate(masks))


def lut_to_masks(lut: int) -> list[int]:
    masks = []
    for k in range(8):
        word = (lut >> (32 * k)) & 0xFFFFFFFF
        masks.append(word - (1 << 32) if word & 0x80000000 else word)
    return masks


def _child_(elem: ET.Element, tag: str, path: str) -> ET.Element:
    child = elem.find(tag)
    if child is None:
        raise CascadeFormatError(f"Missing <{tag}>", path=path)
    return child


def _tokens_(elem: ET.Element, tag: str, path: str) -> list[str]:
    return (_child_(elem, tag, path).text or "").split()


def _ints_(tokens: list[str], path: str) -> list[int]:
    try:
        return [int(token) for token in tokens]
    except ValueError:
        raise CascadeFormatError(f"Expected integers, found {' '.join(tokens)!r}", path=path) from None


def _floats_(tokens: list[str], path: str) -> list[float]:
    try:
        return [float(token) for token in tokens]
    except ValueError:
        raise CascadeFormatError(f"Expected reals, found {' '.join(tokens)!r}", path=path) from None


def _find_cascade_(root: ET.Element) -> ET.Element:
    if root.find("stageType") is not None or root.find("featureType") is not None:
        return root
    for child in root:
        if child.find("stages") is not None:
            if child.find("featureType") is None:
                # the old schema only ever held haar cascades
                raise UnsupportedFeatureError("HAAR")
            return child
    raise CascadeFormatError("No cascade element found", path=root.tag)


def parse_standard_xml(text: str) -> CascadeModel:
    """Parse an LBP cascade in the standard xml schema.

    Raises `UnsupportedFeatureError` for any other feature type and
    `CascadeFormatError` naming the element path for schema violations.
    """
    try:
        root = ET.fromstring(text)  # noqa: S314
    except ET.ParseError as error:
        raise CascadeFormatError(f"Malformed xml: {error}", path="/") from None

    cascade = _find_cascade_(root)
    base = cascade.tag if cascade is root else f"{root.tag}/{cascade.tag}"

    stage_type = " ".join(_tokens_(cascade, "stageType", base))
    if stage_type.upper() != "BOOST":
        raise CascadeFormatError(f"Unsupported stage type {stage_type!r}", path=f"{base}/stageType")
    feature_type = " ".join(_tokens_(cascade, "featureType", base))
    if feature_type.upper() != "LBP":
        raise UnsupportedFeatureError(feature_type)

    (width,) = _ints_(_tokens_(cascade, "width", base), f"{base}/width")
    (height,) = _ints_(_tokens_(cascade, "height", base), f"{base}/height")

    features = []
    for index, node in enumerate(_child_(cascade, "features", base).findall("_")):
        path = f"{base}/features/_[{index}]/rect"
        rect = _ints_(_tokens_(node, "rect", path), path)
        if len(rect) != 4:
            raise CascadeFormatError(f"Expected 4 rect values: {len(rect)} found", path=path)
        x, y, bw, bh = rect
        if x < 0 or y < 0 or bw < 1 or bh < 1 or x + 3 * bw > width or y + 3 * bh > height:
            raise CascadeFormatError(f"Feature {rect} exceeds the {width}x{height} base window", path=path)
        features.append(MBLBPFeature(x, y, bw, bh))

    stages = []
    for s, node in enumerate(_child_(cascade, "stages", base).findall("_")):
        spath = f"{base}/stages/_[{s}]"
        (threshold,) = _floats_(_tokens_(node, "stageThreshold", spath), f"{spath}/stageThreshold")
        weak = []
        for w, wnode in enumerate(_child_(node, "weakClassifiers", spath).findall("_")):
            wpath = f"{spath}/weakClassifiers/_[{w}]"
            nodes = _ints_(_tokens_(wnode, "internalNodes", wpath), f"{wpath}/internalNodes")
            if len(nodes) != 11:
                raise CascadeFormatError(
                    f"Expected a single stump with 8 mask words: {len(nodes)} values found",
                    path=f"{wpath}/internalNodes",
                )
            leaves = _floats_(_tokens_(wnode, "leafValues", wpath), f"{wpath}/leafValues")
            if len(leaves) != 2:
                raise CascadeFormatError(f"Expected 2 leaf values: {len(leaves)} found", path=f"{wpath}/leafValues")
            feature_index = nodes[2]
            if not 0 <= feature_index < len(features):
                raise CascadeFormatError(
                    f"Feature index {feature_index} out of range", path=f"{wpath}/internalNodes",
                )
            weak.append(WeakClassifier(features[feature_index], lut_from_masks(nodes[3:]), leaves[0], leaves[1]))
        if len(weak) == 0:
            raise CascadeFormatError("Stage has no weak classifiers", path=f"{spath}/weakClassifiers")
        stages.append(Stage(tuple(weak), threshold))

    if len(stages) == 0:
        raise CascadeFormatError("Cascade has no stages", path=f"{base}/stages")
    return CascadeModel(width, height, tuple(stages))


def _sub_(parent: ET.Element, tag: str, text: object | None = None) -> ET.Element:
    child = ET.SubElement(parent, tag)
    if text is not None:
        child.text = str(text)
    return child


def serialize_standard_xml(model: CascadeModel) -> str:
    """Write `model` in the standard schema. Each weak classifier gets its own feature entry."""
    root = ET.Element("opencv_storage")
    cascade = _sub_(root, "cascade")
    cascade.set("type_id", "opencv-cascade-classifier")
    _sub_(cascade, "stageType", "BOOST")
    _sub_(cascade, "featureType", "LBP")
    _sub_(cascade, "height", model.base_height)
    _sub_(cascade, "width", model.base_width)
    params = _sub_(cascade, "stageParams")
    _sub_(params, "maxWeakCount", max(len(stage.weak) for stage in model.stages))
    params = _sub_(cascade, "featureParams")
    _sub_(params, "maxCatCount", 256)
    _sub_(cascade, "stageNum", model.num_stages)

    stages = _sub_(cascade, "stages")
    features = []
    for stage in model.stages:
        node = _sub_(stages, "_")
        _sub_(node, "maxWeakCount", len(stage.weak))
        _sub_(node, "stageThreshold", repr(stage.threshold))
        classifiers = _sub_(node, "weakClassifiers")
        for weak in stage.weak:
            wnode = _sub_(classifiers, "_")
            masks = " ".join(str(m) for m in lut_to_masks(weak.lut))
            _sub_(wnode, "internalNodes", f"0 -1 {len(features)} {masks}")
            _sub_(wnode, "leafValues", f"{weak.left!r} {weak.right!r}")
            features.append(weak.feature)

    fnodes = _sub_(cascade, "features")
    for feature in features:
        node = _sub_(fnodes, "_")
        _sub_(node, "rect", f"{feature.x} {feature.y} {feature.block_width} {feature.block_height}")

    ET.indent(root)
    return '<?xml version="1.0"?>\n' + ET.tostring(root, encoding="unicode") + "\n"
