"""
DRACO - Run Event System.

Structured events emitted by long-running commands (synthesis, training,
evaluation). The CLI subscribes a console or JSON-lines printer; tests and
notebooks can subscribe plain callbacks.

Event Flow (training):
    run_started -> epoch_started -> step_complete* -> validation_complete ->
    checkpoint_saved? -> ... -> run_complete | run_aborted

Event Flow (synthesis):
    run_started -> sample_rejected* -> synth_progress* -> synth_complete
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)


class EventType(str, Enum):
    """Run event types."""
    # Run lifecycle
    RUN_STARTED = "run_started"
    RUN_COMPLETE = "run_complete"
    RUN_ABORTED = "run_aborted"

    # Optimization progress
    EPOCH_STARTED = "epoch_started"
    STEP_COMPLETE = "step_complete"
    VALIDATION_COMPLETE = "validation_complete"
    CHECKPOINT_SAVED = "checkpoint_saved"

    # Synthesis progress
    SAMPLE_REJECTED = "sample_rejected"
    SYNTH_PROGRESS = "synth_progress"
    SYNTH_COMPLETE = "synth_complete"

    # Aggregated counters
    STATS_UPDATED = "stats_updated"


@dataclass
class RunStats:
    """Running counters for the current command."""
    step: int = 0
    total_steps: int = 0
    epoch: int = 0
    epochs: int = 0
    last_loss: float = float('nan')
    best_metric: float = float('inf')

    generated: int = 0
    rejected: int = 0
    exhausted: int = 0

    status: str = "Ready"

    @property
    def progress(self) -> float:
        """Fraction of optimization steps done (0.0 to 1.0)."""
        if self.total_steps == 0:
            return 0.0
        return self.step / self.total_steps

    @property
    def rejection_rate(self) -> float:
        """Rejected draws per attempted draw."""
        attempts = self.generated + self.rejected
        if attempts == 0:
            return 0.0
        return self.rejected / attempts


@dataclass
class RunEvent:
    """
    Event emitted by a running command.

    All events have a type, timestamp, and event-specific data.
    """
    event_type: EventType
    timestamp: datetime = field(default_factory=datetime.now)
    data: Dict[str, Any] = field(default_factory=dict)

    @property
    def message(self) -> str:
        """Get log message if present."""
        return self.data.get("message", "")

    @property
    def step(self) -> int:
        """Get optimization step if present."""
        return self.data.get("step", 0)


EventCallback = Callable[[RunEvent], None]


class EventEmitter:
    """
    Event emitter for DRACO commands.

    Usage:
        emitter = EventEmitter()
        emitter.subscribe(my_handler)
        emitter.subscribe(val_handler, EventType.VALIDATION_COMPLETE)
        emitter.step_complete(step=10, epoch=0, lr=1e-3, losses={'total': 1.2})
    """

    def __init__(self):
        self._listeners: List[tuple[EventCallback, Optional[EventType]]] = []
        self._stats = RunStats()

    @property
    def stats(self) -> RunStats:
        """Get current statistics."""
        return self._stats

    def reset_stats(self) -> None:
        """Reset statistics for a new run."""
        self._stats = RunStats()

    def subscribe(
        self,
        callback: EventCallback,
        event_type: Optional[EventType] = None
    ) -> None:
        """
        Subscribe to events.

        Args:
            callback: Function to call with RunEvent
            event_type: If specified, only receive this event type
        """
        self._listeners.append((callback, event_type))

    def emit(self, event_type: EventType, **data) -> RunEvent:
        """Emit an event to all subscribed listeners."""
        event = RunEvent(
            event_type=event_type,
            timestamp=datetime.now(),
            data=data
        )

        for callback, filter_type in self._listeners:
            if filter_type is None or filter_type == event_type:
                try:
                    callback(event)
                except Exception as e:
                    # Listener errors must not break a run
                    logger.warning(f"Event listener error: {e}")

        return event

    # =========================================================================
    # Convenience methods for common events
    # =========================================================================

    def run_started(self, command: str, **details) -> None:
        """Emit run started event and reset stats."""
        self.reset_stats()
        self._stats.status = "Running"
        self._stats.total_steps = int(details.get('total_steps', 0))
        self._stats.epochs = int(details.get('epochs', 0))
        self.emit(EventType.RUN_STARTED, command=command, **details)

    def run_complete(self, command: str, **summary) -> None:
        """Emit run complete event."""
        self._stats.status = "Complete"
        self.emit(EventType.RUN_COMPLETE, command=command, **summary)
        self._emit_stats_update()

    def run_aborted(self, command: str, reason: str, **diagnostics) -> None:
        """Emit run aborted event."""
        self._stats.status = "Aborted"
        self.emit(EventType.RUN_ABORTED, command=command, reason=reason, **diagnostics)

    def epoch_started(self, epoch: int, epochs: int) -> None:
        """Emit epoch started event."""
        self._stats.epoch = epoch
        self._stats.epochs = epochs
        self.emit(EventType.EPOCH_STARTED, epoch=epoch, epochs=epochs)

    def step_complete(
        self,
        step: int,
        epoch: int,
        lr: float,
        losses: Dict[str, float],
    ) -> None:
        """Emit optimization step complete event."""
        self._stats.step = step + 1
        self._stats.last_loss = losses.get('total', float('nan'))
        self.emit(
            EventType.STEP_COMPLETE,
            step=step,
            epoch=epoch,
            lr=lr,
            losses=losses,
        )

    def validation_complete(
        self,
        step: int,
        epoch: int,
        trans_err: float,
        rot_err: float,
        is_best: bool,
    ) -> None:
        """Emit validation result."""
        if is_best:
            self._stats.best_metric = trans_err + rot_err
        self.emit(
            EventType.VALIDATION_COMPLETE,
            step=step,
            epoch=epoch,
            trans_err=trans_err,
            rot_err=rot_err,
            is_best=is_best,
        )
        self._emit_stats_update()

    def checkpoint_saved(self, path: str, step: int, reason: str) -> None:
        """Emit checkpoint written event."""
        self.emit(EventType.CHECKPOINT_SAVED, path=path, step=step, reason=reason)

    def sample_rejected(self, source: str, reason: str, attempt: int) -> None:
        """Emit rejected synthesis draw."""
        self._stats.rejected += 1
        self.emit(
            EventType.SAMPLE_REJECTED,
            source=source,
            reason=reason,
            attempt=attempt,
        )

    def synth_progress(self, done: int, total: int, source: str = "") -> None:
        """Emit synthesis progress for one finished source image."""
        self._stats.generated = done
        self.emit(EventType.SYNTH_PROGRESS, done=done, total=total, source=source)

    def synth_complete(
        self,
        generated: int,
        rejected: int,
        exhausted: int,
        out_dir: str,
    ) -> None:
        """Emit synthesis complete event."""
        self._stats.generated = generated
        self._stats.rejected = rejected
        self._stats.exhausted = exhausted
        self._stats.status = "Complete"
        self.emit(
            EventType.SYNTH_COMPLETE,
            generated=generated,
            rejected=rejected,
            exhausted=exhausted,
            rejection_rate=self._stats.rejection_rate,
            out_dir=out_dir,
        )

    def _emit_stats_update(self) -> None:
        """Emit aggregated stats update."""
        self.emit(
            EventType.STATS_UPDATED,
            step=self._stats.step,
            total_steps=self._stats.total_steps,
            epoch=self._stats.epoch,
            epochs=self._stats.epochs,
            progress=self._stats.progress,
            last_loss=self._stats.last_loss,
            best_metric=self._stats.best_metric,
            generated=self._stats.generated,
            rejected=self._stats.rejected,
            status=self._stats.status,
        )


# =========================================================================
# Printers (for CLI)
# =========================================================================

class ConsoleEventPrinter:
    """
    Prints run events to the console.

    Usage:
        printer = ConsoleEventPrinter(verbose=True, color=True)
        emitter.subscribe(printer.handle_event)
    """

    COLORS = {
        "reset": "\033[0m",
        "bold": "\033[1m",
        "dim": "\033[2m",
        "red": "\033[31m",
        "green": "\033[32m",
        "yellow": "\033[33m",
        "blue": "\033[34m",
        "cyan": "\033[36m",
    }

    def __init__(
        self,
        verbose: bool = False,
        color: bool = True,
        show_timestamps: bool = False,
        log_every: int = 50,
    ):
        self.verbose = verbose
        self.color = color
        self.show_timestamps = show_timestamps
        self.log_every = max(1, log_every)

    def _c(self, text: str, *colors: str) -> str:
        """Apply colors if enabled."""
        if not self.color:
            return text
        codes = "".join(self.COLORS.get(c, "") for c in colors)
        return f"{codes}{text}{self.COLORS['reset']}"

    def _timestamp(self, event: RunEvent) -> str:
        """Format timestamp if enabled."""
        if not self.show_timestamps:
            return ""
        return f"[{event.timestamp.strftime('%H:%M:%S')}] "

    def handle_event(self, event: RunEvent) -> None:
        """Handle and print a run event."""
        handler = getattr(self, f"_handle_{event.event_type.value}", None)
        if handler:
            handler(event)
        elif self.verbose:
            print(f"{self._timestamp(event)}[{event.event_type.value}] {event.data}")

    def _handle_run_started(self, event: RunEvent) -> None:
        data = event.data
        print()
        print(self._c("=" * 60, "cyan", "bold"))
        print(self._c(f"DRACO {data['command'].upper()} STARTED", "cyan", "bold"))
        print(self._c("=" * 60, "cyan", "bold"))
        for key in sorted(k for k in data if k != 'command'):
            print(f"{key}: {data[key]}")
        print()

    def _handle_run_complete(self, event: RunEvent) -> None:
        data = event.data
        print()
        print(self._c("#" * 60, "green", "bold"))
        print(self._c(f"{data['command'].upper()} COMPLETE", "green", "bold"))
        print(self._c("#" * 60, "green", "bold"))
        for key in sorted(k for k in data if k != 'command'):
            print(f"{key}: {data[key]}")
        print()

    def _handle_run_aborted(self, event: RunEvent) -> None:
        data = event.data
        print()
        print(self._c(f"{data['command'].upper()} ABORTED: {data['reason']}", "red", "bold"))
        for key in sorted(k for k in data if k not in ('command', 'reason')):
            print(f"  {key}: {data[key]}")
        print()

    def _handle_epoch_started(self, event: RunEvent) -> None:
        if self.verbose:
            data = event.data
            print(self._c(f"Epoch {data['epoch'] + 1}/{data['epochs']}", "blue", "bold"))

    def _handle_step_complete(self, event: RunEvent) -> None:
        data = event.data
        if data['step'] % self.log_every != 0 and not self.verbose:
            return
        loss = data['losses'].get('total', float('nan'))
        print(f"{self._timestamp(event)}  step {data['step']:>7d}  "
              f"lr {data['lr']:.3e}  loss {loss:.4f}")

    def _handle_validation_complete(self, event: RunEvent) -> None:
        data = event.data
        best = self._c(" BEST", "green", "bold") if data['is_best'] else ""
        print(f"{self._timestamp(event)}  {self._c('VAL', 'cyan')} epoch {data['epoch'] + 1}: "
              f"trans {data['trans_err']:.2f} px, rot {data['rot_err']:.2f} deg{best}")

    def _handle_checkpoint_saved(self, event: RunEvent) -> None:
        if self.verbose:
            data = event.data
            print(f"{self._timestamp(event)}  saved {data['reason']} checkpoint: {data['path']}")

    def _handle_sample_rejected(self, event: RunEvent) -> None:
        if self.verbose:
            data = event.data
            status = self._c("REJECTED", "yellow")
            print(f"{self._timestamp(event)}  {status}: {data['source']} ({data['reason']})")

    def _handle_synth_progress(self, event: RunEvent) -> None:
        if self.verbose:
            data = event.data
            print(f"{self._timestamp(event)}  {data['done']}/{data['total']} {data['source']}")

    def _handle_synth_complete(self, event: RunEvent) -> None:
        data = event.data
        print(f"Generated: {self._c(str(data['generated']), 'green')}")
        print(f"Rejected draws: {self._c(str(data['rejected']), 'yellow')} "
              f"({data['rejection_rate']:.1%})")
        if data['exhausted']:
            print(f"Exhausted requests: {self._c(str(data['exhausted']), 'red')}")

    def _handle_stats_updated(self, event: RunEvent) -> None:
        """Stats updates are silent on the console."""
        pass


class JsonEventPrinter:
    """Prints events as JSON lines for machine consumption."""

    def handle_event(self, event: RunEvent) -> None:
        output = {
            "type": event.event_type.value,
            "timestamp": event.timestamp.isoformat(),
            "data": event.data,
        }
        print(json.dumps(output, default=str), flush=True)
