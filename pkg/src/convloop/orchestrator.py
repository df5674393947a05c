"""The conversational repair loop.

Each turn samples the model on the current transcript, validates the
extracted patch, and (unless it is plausible) appends the patch and its
failure feedback to the transcript.  A chain ends when a plausible patch is
found or the maximum chain length is reached, at which point a fresh chain
starts from the initial prompt.  Every model sample counts against the
sample budget, including ones whose outcome is served from the cache.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence, Union

from .backends import BackendError, GenerationBackend, GenerationRequest
from .extraction import extract_patch
from .harness import OutcomeCache, validate
from .model import (
    BugInstance,
    CandidatePatch,
    Chain,
    HarnessError,
    Plausible,
    Provenance,
    RepairConfig,
    RepairResult,
    Termination,
    Turn,
)
from .prompting import assemble_transcript, build_initial_prompt
from .reporting import judge_correct_exact

log = logging.getLogger(__name__)

Validator = Callable[[BugInstance, str, RepairConfig], object]
BackendSource = Union[GenerationBackend, Callable[[BugInstance], GenerationBackend]]


class HarnessFault(RuntimeError):
    """Validation could not run; the repair attempt says nothing about the patch."""

    def __init__(self, bug_id: str, message: str):
        super().__init__(f"{bug_id}: HarnessError: {message}")
        self.bug_id = bug_id
        self.message = message


def repair(
    bug: BugInstance,
    cfg: RepairConfig,
    backend: GenerationBackend,
    validator: Validator = validate,
    cache: Optional[OutcomeCache] = None,
) -> RepairResult:
    """Run the repair loop on one bug until a plausible patch or budget exhaustion.

    Raises HarnessFault when validation reports an environment problem.
    """
    started = time.monotonic()
    cache = OutcomeCache() if cache is None else cache
    initial = build_initial_prompt(bug)
    chains: list[Chain] = []
    samples_used = 0
    validations = 0

    def finish(plausible=None, failure=None) -> RepairResult:
        return RepairResult(
            bug_id=bug.id,
            chains=tuple(chains),
            plausible_patch=plausible,
            tries=None if plausible is None else plausible.provenance.global_sample_index,
            correct_exact=None if plausible is None else judge_correct_exact(plausible, bug),
            wall_clock_ms=int((time.monotonic() - started) * 1000),
            validations=validations,
            failure=failure,
        )

    while samples_used < cfg.sample_budget:
        chain_index = len(chains)
        turns: list[Turn] = []
        transcript = initial
        while True:
            if len(turns) == cfg.max_chain_length:
                termination = Termination.MAX_LENGTH_REACHED
                break
            if transcript.estimated_tokens > cfg.prompt_token_budget:
                termination = Termination.TOKEN_BUDGET_EXCEEDED
                break
            if samples_used >= cfg.sample_budget:
                termination = Termination.BUDGET_EXHAUSTED
                break

            req = GenerationRequest(
                prompt=transcript,
                top_p=cfg.top_p,
                temperature=cfg.temperature,
                max_generation_tokens=cfg.max_generation_tokens,
                chain_index=chain_index,
                turn_index=len(turns) + 1,
            )
            try:
                resp = backend.generate(req)
            except BackendError as exc:
                log.error("%s: backend failure: %s", bug.id, exc)
                chains.append(Chain(chain_index, turns, Termination.BACKEND_FAILURE))
                return finish(failure=f"BackendFailure: {exc}")
            samples_used += 1

            source = extract_patch(resp.raw_text, bug)
            patch = CandidatePatch.create(
                resp.raw_text, source, bug.language, Provenance(chain_index, len(turns) + 1, samples_used)
            )
            outcome = cache.lookup(patch.normalized)
            reused = outcome is not None
            if not reused:
                outcome = validator(bug, source, cfg)
                validations += 1
                if isinstance(outcome, HarnessError):
                    raise HarnessFault(bug.id, outcome.message)
                cache.insert(patch.normalized, outcome)
            turns.append(Turn(transcript.text, patch, outcome, reused))
            log.debug("%s chain %d turn %d: %s", bug.id, chain_index, len(turns), outcome.kind)

            if isinstance(outcome, Plausible):
                chains.append(Chain(chain_index, turns, Termination.FOUND_PLAUSIBLE))
                return finish(plausible=patch)
            transcript = assemble_transcript(initial, turns, cfg.feedback_style, bug)

        chains.append(Chain(chain_index, turns, termination))
        if not turns:
            # the initial prompt alone is over the token budget; no chain can progress
            return finish(failure="TokenBudgetExceeded: initial prompt exceeds the prompt token budget")

    return finish()


def _backend_for(source: BackendSource, bug: BugInstance) -> GenerationBackend:
    if hasattr(source, "generate"):
        return source
    return source(bug)


def repair_suite(
    bugs: Sequence[BugInstance],
    cfg: RepairConfig,
    backend: BackendSource,
    parallelism: int = 1,
    validator: Validator = validate,
) -> list[RepairResult]:
    """Repair every bug, at most ``parallelism`` at a time, keeping input order.

    ``backend`` is either one shared backend or a factory called per bug
    (scripted replays need one fresh backend per bug).  A harness fault or
    a factory failure marks only the affected bug's result.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(bug: BugInstance) -> RepairResult:
        started = time.monotonic()
        try:
            return repair(bug, cfg, _backend_for(backend, bug), validator=validator)
        except HarnessFault as exc:
            log.error("%s", exc)
            failure = f"HarnessError: {exc.message}"
        except (BackendError, OSError, ValueError) as exc:
            log.error("%s: %s", bug.id, exc)
            failure = f"BackendFailure: {exc}"
        return RepairResult(bug.id, (), wall_clock_ms=int((time.monotonic() - started) * 1000), failure=failure)

    if parallelism == 1 or len(bugs) <= 1:
        return [one(b) for b in bugs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, bugs))
