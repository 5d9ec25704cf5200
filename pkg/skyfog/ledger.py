"""Proof-of-stake payment ledger, result audits, reputations, and attacker behaviour."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from skyfog.entities import SimClock
from skyfog.exceptions import NoEligibleValidatorError
from skyfog.models import AttackerProfile, AttackKind, LedgerConfig

logger = logging.getLogger(__name__)

GENESIS_PARENT = "0" * 64


class Transaction(BaseModel):
    """Payment from a task vehicle to the fog node that served it."""

    tx_id: str
    payer: int
    payee: int
    amount: float = Field(ge=0)
    fee: float = Field(ge=0)
    task_id: str
    up: float
    req: float
    deadline: float
    latency: float
    created: float

    @model_validator(mode="after")
    def _distinct_parties(self) -> "Transaction":
        if self.payer == self.payee:
            raise ValueError("payer and payee must differ")
        return self


def block_digest(
    height: int,
    parent_digest: str,
    validator: int,
    timestamp: float,
    transactions: List[Transaction],
) -> str:
    """SHA-256 over the block fields in declaration order, compact JSON."""
    payload = [
        height,
        parent_digest,
        validator,
        timestamp,
        [tx.model_dump(mode="json") for tx in transactions],
    ]
    canonical = json.dumps(payload, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Block(BaseModel):
    height: int = Field(ge=0)
    parent_digest: str
    digest: str
    validator: int
    timestamp: float
    transactions: List[Transaction] = Field(default_factory=list)
    reward: float = Field(default=0.0, ge=0)

    def compute_digest(self) -> str:
        return block_digest(self.height, self.parent_digest, self.validator, self.timestamp, self.transactions)

    @property
    def fees(self) -> float:
        return sum(tx.fee for tx in self.transactions)


class TransactionPool(BaseModel):
    """Pending transactions in arrival order."""

    transactions: List[Transaction] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transactions)

    def ids(self) -> List[str]:
        return [tx.tx_id for tx in self.transactions]


class Chain(BaseModel):
    blocks: List[Block] = Field(default_factory=list)

    @property
    def height(self) -> int:
        """Height of the tip, or -1 for an empty chain."""
        return self.blocks[-1].height if self.blocks else -1

    @property
    def tip_digest(self) -> str:
        return self.blocks[-1].digest if self.blocks else GENESIS_PARENT

    def tx_ids(self) -> set:
        return {tx.tx_id for block in self.blocks for tx in block.transactions}


class ReputationLedger(BaseModel):
    """Beta reputation per node: score = (alpha + 1) / (alpha + beta + 2)."""

    alpha: Dict[int, int] = Field(default_factory=dict)
    beta: Dict[int, int] = Field(default_factory=dict)
    threshold: float = Field(default=0.3, ge=0, le=1)

    def score(self, node: int) -> float:
        a = self.alpha.get(node, 0)
        b = self.beta.get(node, 0)
        return (a + 1) / (a + b + 2)

    def is_blacklisted(self, node: int) -> bool:
        return self.score(node) < self.threshold

    def record(self, node: int, correct: bool) -> None:
        counts = self.alpha if correct else self.beta
        counts[node] = counts.get(node, 0) + 1


class Submission(BaseModel):
    """Outcome of offering a transaction to the pool."""

    accepted: bool
    reason: Optional[str] = None
    attack_detected: bool = False


class AuditOutcome(BaseModel):
    audited: bool
    correct: bool
    release_payment: bool


def credential_digest(credential: str) -> str:
    return hashlib.sha256(credential.encode("utf-8")).hexdigest()


def authenticate(node_id: int, credential: str, registry: Mapping[int, str]) -> bool:
    """Accept iff the credential hashes to the digest registered for the id."""
    expected = registry.get(node_id)
    return expected is not None and credential_digest(credential) == expected


def submit_transaction(
    pool: TransactionPool,
    tx: Transaction,
    credential: str,
    registry: Mapping[int, str],
    settled_ids: Optional[set] = None,
) -> Submission:
    """Authenticate the payer and append the transaction unless it is a duplicate."""
    if not authenticate(tx.payer, credential, registry):
        return Submission(accepted=False, reason="unauthenticated payer", attack_detected=True)
    if tx.tx_id in pool.ids() or (settled_ids is not None and tx.tx_id in settled_ids):
        return Submission(accepted=False, reason="duplicate transaction id")
    pool.transactions.append(tx)
    return Submission(accepted=True)


def select_validator(stakes: Mapping[int, float], rng: np.random.Generator) -> int:
    """Stake-proportional draw among the stakers, in id order."""
    ids = sorted(node for node, stake in stakes.items() if stake > 0)
    total = float(sum(stakes[node] for node in ids))
    if not ids or total <= 0:
        raise NoEligibleValidatorError()
    weights = np.array([stakes[node] for node in ids], dtype=float) / total
    return int(ids[rng.choice(len(ids), p=weights)])


def forge_due(pool_size: int, ttis_since_last: int, interval_ttis: int, max_tx: int) -> bool:
    return pool_size >= max_tx or (pool_size > 0 and ttis_since_last >= interval_ttis)


def maybe_forge_block(
    pool: TransactionPool,
    chain: Chain,
    clock: SimClock,
    last_block_tti: int,
    stakes: Mapping[int, float],
    rng: np.random.Generator,
    config: LedgerConfig,
) -> Optional[Block]:
    """Forge a block from the oldest pooled transactions when a trigger fires.

    Triggers: the pool holds `block_max_tx` transactions, or it is nonempty and
    a block interval has passed since the last block. The pool keeps its
    transactions if no validator can be drawn.
    """
    since = clock.tti_index - last_block_tti
    if not forge_due(len(pool), since, clock.ttis_for(config.block_interval), config.block_max_tx):
        return None
    validator = select_validator(stakes, rng)
    batch = pool.transactions[: config.block_max_tx]
    del pool.transactions[: len(batch)]
    height = chain.height + 1
    timestamp = clock.time
    return Block(
        height=height,
        parent_digest=chain.tip_digest,
        digest=block_digest(height, chain.tip_digest, validator, timestamp, batch),
        validator=validator,
        timestamp=timestamp,
        transactions=batch,
        reward=config.block_reward,
    )


def verify_block(chain: Chain, block: Block, max_tx: int = 100) -> Tuple[bool, str]:
    """Check linkage, height, digest, and transactions; append the block if valid."""
    if block.height != chain.height + 1:
        return False, f"height {block.height} does not follow tip {chain.height}"
    if block.parent_digest != chain.tip_digest:
        return False, "parent digest does not match the chain tip"
    if block.compute_digest() != block.digest:
        return False, "digest mismatch"
    if len(block.transactions) > max_tx:
        return False, f"{len(block.transactions)} transactions exceed the cap of {max_tx}"
    seen = chain.tx_ids()
    for tx in block.transactions:
        if tx.tx_id in seen:
            return False, f"transaction {tx.tx_id} already on chain"
        if tx.amount < 0 or tx.fee < 0 or tx.payer == tx.payee:
            return False, f"transaction {tx.tx_id} is invalid"
        seen.add(tx.tx_id)
    chain.blocks.append(block)
    return True, "accepted"


def settle_block(block: Block, balances: Dict[int, float]) -> Dict[int, float]:
    """Move amounts from payers to payees; fees are paid in reward_validator."""
    for tx in block.transactions:
        balances[tx.payer] = balances.get(tx.payer, 0.0) - tx.amount - tx.fee
        balances[tx.payee] = balances.get(tx.payee, 0.0) + tx.amount
    return balances


def reward_validator(block: Block, balances: Dict[int, float]) -> Dict[int, float]:
    """Credit the validator with the block's fees plus the minted reward."""
    balances[block.validator] = balances.get(block.validator, 0.0) + block.fees + block.reward
    return balances


def apply_attack(profile: Optional[AttackerProfile], elapsed: float) -> bool:
    """Whether a result computed `elapsed` seconds after spawn is correct."""
    if profile is None or profile.kind is AttackKind.IDENTITY_SPOOF:
        return True
    if profile.kind is AttackKind.ALWAYS_ON:
        return False
    phase = elapsed % (profile.on_period + profile.off_period)
    return phase < profile.on_period


def audit_and_update_reputation(
    node: int,
    correct: bool,
    rng: np.random.Generator,
    p_audit: float,
    ledger: ReputationLedger,
) -> AuditOutcome:
    """Re-verify a result with probability p_audit and update the node's counts.

    Audited correct results add to alpha, audited false ones to beta and the
    payment is withheld. Unaudited results are paid and leave the counts alone.
    """
    audited = bool(rng.random() < p_audit)
    if not audited:
        return AuditOutcome(audited=False, correct=correct, release_payment=True)
    ledger.record(node, correct)
    if not correct:
        logger.debug("Audit caught a false result from node %d", node)
    return AuditOutcome(audited=True, correct=correct, release_payment=correct)


def export_chain(chain: Chain, path: Union[str, Path]) -> None:
    """One block per line, fields in declaration order."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for block in chain.blocks:
            handle.write(block.model_dump_json() + "\n")


def reputation_frame(ledger: ReputationLedger, names: Mapping[int, str]) -> pd.DataFrame:
    nodes = sorted(set(ledger.alpha) | set(ledger.beta))
    return pd.DataFrame(
        {
            "node": [names.get(node, str(node)) for node in nodes],
            "alpha": [ledger.alpha.get(node, 0) for node in nodes],
            "beta": [ledger.beta.get(node, 0) for node in nodes],
            "score": [ledger.score(node) for node in nodes],
            "blacklisted": [ledger.is_blacklisted(node) for node in nodes],
        },
    )
