"""Exception hierarchy shared across the package.

Every error raised by the public API derives from SceneFitError so callers
(CLI, service) can map failures to structured diagnostics in one place.
"""


class SceneFitError(Exception):
    """Base class for all package errors."""

    code = "error"


# -- geometry ---------------------------------------------------------------

class EmptyCloud(SceneFitError):
    """Operation requires a non-empty point cloud."""

    code = "empty_cloud"


class EmptyMesh(SceneFitError):
    """Mesh has no valid (positive-area) faces to sample."""

    code = "empty_mesh"


# -- fitting ----------------------------------------------------------------

class DegenerateCorrespondences(SceneFitError):
    """Fewer than three usable pairs, or a collinear source configuration."""

    code = "degenerate_correspondences"


class NoValidCorrespondences(SceneFitError):
    """Every correspondence was rejected at the initial pose."""

    code = "no_valid_correspondences"


class AllRestartsFailed(SceneFitError):
    """No restart produced any valid correspondences."""

    code = "all_restarts_failed"


# -- model library ----------------------------------------------------------

class MeshLoadError(SceneFitError):
    """A manifest entry's mesh could not be loaded."""

    code = "mesh_load_error"

    def __init__(self, model_id, message):
        super().__init__(f"{model_id}: {message}")
        self.model_id = model_id


class DuplicateModelId(SceneFitError):
    """Two manifest entries share a model_id."""

    code = "duplicate_model_id"


# -- sessions ---------------------------------------------------------------

class SlotNotFound(SceneFitError):
    code = "slot_not_found"


class SlotAccepted(SceneFitError):
    """Slot is frozen; mutation refused."""

    code = "slot_accepted"


class NoActiveFit(SceneFitError):
    """Slot has no active fit to cycle, correct, or accept."""

    code = "no_active_fit"


class NoFitFound(SceneFitError):
    """Point selection produced an empty ranking; the slot stays unfit."""

    code = "no_fit_found"

    def __init__(self, slot_id):
        super().__init__(f"no model produced a valid fit for slot {slot_id}")
        self.slot_id = slot_id


# -- PLY I/O ----------------------------------------------------------------

class PlyError(SceneFitError):
    code = "ply_error"


class HeaderMalformed(PlyError):
    code = "header_malformed"


class BodyTruncated(PlyError):
    code = "body_truncated"


class BadFaceIndex(PlyError):
    code = "bad_face_index"


# -- simulation -------------------------------------------------------------

class OracleExhausted(SceneFitError):
    """Simulated user ran out of corrections before acceptance."""

    code = "oracle_exhausted"
