import json

import pytest
from pydantic import BaseModel, ValidationError

from src.core.error_handlers import EXCEPTION_HANDLERS, format_error, handle_exception
from src.core.exceptions import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    CheckpointMismatchError,
    ConfigurationError,
    EpochExhausted,
    IndivisibleResolutionError,
    IngestionError,
    StylisationError,
    TrainingStepError,
    UsageError,
)


def _last_error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"]


class TestExceptions:
    """Test the exception hierarchy."""

    def test_exit_codes(self):
        """Usage problems exit 1, everything else 2."""
        assert UsageError().exit_code == EXIT_USAGE
        assert ConfigurationError().exit_code == EXIT_RUNTIME
        assert IngestionError("bad", ["a.png"]).exit_code == EXIT_RUNTIME
        assert EpochExhausted(3).exit_code == EXIT_OK

    def test_indivisible_resolution_message(self):
        """The message tells the caller how to fix the frame."""
        error = IndivisibleResolutionError(30, 32)
        assert "multiples of 4" in error.message
        assert error.details == {"height": 30, "width": 32, "multiple": 4}

    def test_ingestion_lists_bad_paths(self):
        error = IngestionError("Undecodable files", ["x/a.png", "x/b.png"])
        assert error.bad_paths == ["x/a.png", "x/b.png"]
        assert "x/b.png" in error.message

    def test_training_step_error(self):
        error = TrainingStepError("style", float("nan"), step=12, last_good_checkpoint="ckpt/step_000010.ckpt")
        assert error.component == "style"
        assert error.details["last_good_checkpoint"] == "ckpt/step_000010.ckpt"
        assert "step 12" in error.message


class TestHandlers:
    """Test exit-code dispatch and the error records."""

    def test_format_error(self):
        """Details are only present when given."""
        assert "details" not in format_error(2, "boom")["error"]
        assert format_error(1, "bad", {"k": 1}, "UsageError")["error"] == {
            "type": "UsageError", "message": "bad", "exit_code": 1, "details": {"k": 1}}

    def test_toolkit_error(self, capsys):
        code = handle_exception(CheckpointMismatchError("config_hash", "abc", "def"))
        assert code == EXIT_RUNTIME
        error = _last_error(capsys)
        assert error["type"] == "CheckpointMismatchError"
        assert error["details"]["field"] == "config_hash"

    def test_usage_error(self, capsys):
        assert handle_exception(UsageError("no such flag")) == EXIT_USAGE
        assert _last_error(capsys)["message"] == "no such flag"

    def test_validation_error(self, capsys):
        class Document(BaseModel):
            steps: int

        with pytest.raises(ValidationError) as exc_info:
            Document(steps="many")
        assert handle_exception(exc_info.value) == EXIT_USAGE
        error = _last_error(capsys)
        assert error["details"]["validation_errors"][0]["field"] == "steps"

    def test_missing_file(self, capsys, tmp_path):
        try:
            open(tmp_path / "absent.json")
        except FileNotFoundError as e:
            assert handle_exception(e) == EXIT_RUNTIME
        assert "absent.json" in _last_error(capsys)["message"]

    def test_unexpected(self, capsys):
        assert handle_exception(KeyError("x")) == EXIT_RUNTIME
        assert _last_error(capsys)["type"] == "InternalError"

    def test_registered_base_classes(self):
        assert StylisationError in EXCEPTION_HANDLERS
        assert Exception in EXCEPTION_HANDLERS
