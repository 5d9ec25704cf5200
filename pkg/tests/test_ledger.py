"""Tests for the proof-of-stake ledger, audits, and attackers."""

import json

import numpy as np
import pytest

from skyfog.entities import SimClock
from skyfog.exceptions import NoEligibleValidatorError
from skyfog.ledger import (
    GENESIS_PARENT,
    AuditOutcome,
    Block,
    Chain,
    ReputationLedger,
    Transaction,
    TransactionPool,
    apply_attack,
    audit_and_update_reputation,
    block_digest,
    credential_digest,
    export_chain,
    maybe_forge_block,
    reputation_frame,
    reward_validator,
    select_validator,
    settle_block,
    submit_transaction,
    verify_block,
)
from skyfog.models import AttackerProfile, AttackKind, LedgerConfig

STAKES = {10: 100.0}


def make_tx(index: int = 0, payer: int = 0, payee: int = 3, amount: float = 0.2) -> Transaction:
    return Transaction(
        tx_id=f"tx-{index}",
        payer=payer,
        payee=payee,
        amount=amount,
        fee=amount * 0.01,
        task_id=f"tv-0-0-{index}",
        up=5e5,
        req=2e8,
        deadline=0.5,
        latency=0.15,
        created=0.0,
    )


def forge(pool: TransactionPool, chain: Chain, tti: int, last_block_tti: int = 0, config=None):
    clock = SimClock(tti_index=tti)
    return maybe_forge_block(pool, chain, clock, last_block_tti, STAKES, np.random.default_rng(0), config or LedgerConfig())


class TestBlocks:
    """Test digests, forging, and verification."""

    def test_digest_is_stable_and_sensitive(self):
        """Test that the digest depends on every field."""
        digest = block_digest(0, GENESIS_PARENT, 10, 1.0, [make_tx()])
        assert digest == block_digest(0, GENESIS_PARENT, 10, 1.0, [make_tx()])
        assert len(digest) == 64
        assert digest != block_digest(0, GENESIS_PARENT, 10, 1.0, [make_tx(amount=0.3)])
        assert digest != block_digest(1, GENESIS_PARENT, 10, 1.0, [make_tx()])

    def test_no_block_before_the_interval(self):
        """Test that a small pool waits for the block interval."""
        pool = TransactionPool(transactions=[make_tx()])
        assert forge(pool, Chain(), tti=19) is None
        assert len(pool) == 1

    def test_interval_trigger(self):
        """Test that a nonempty pool forges once the interval has passed."""
        pool = TransactionPool(transactions=[make_tx()])
        block = forge(pool, Chain(), tti=20)
        assert block is not None
        assert block.height == 0
        assert block.parent_digest == GENESIS_PARENT
        assert block.validator == 10
        assert block.timestamp == pytest.approx(1.0)
        assert len(pool) == 0

    def test_empty_pool_never_forges(self):
        """Test that no block is forged without transactions."""
        assert forge(TransactionPool(), Chain(), tti=500) is None

    def test_size_trigger_takes_the_oldest(self):
        """Test that a full pool forges at once with the oldest transactions."""
        pool = TransactionPool(transactions=[make_tx(i) for i in range(130)])
        block = forge(pool, Chain(), tti=1)
        assert [tx.tx_id for tx in block.transactions] == [f"tx-{i}" for i in range(100)]
        assert pool.ids() == [f"tx-{i}" for i in range(100, 130)]

    def test_verify_appends_valid_blocks(self):
        """Test that a forged block links onto the chain."""
        chain = Chain()
        first = forge(TransactionPool(transactions=[make_tx(0)]), chain, tti=20)
        assert verify_block(chain, first) == (True, "accepted")
        second = forge(TransactionPool(transactions=[make_tx(1)]), chain, tti=40, last_block_tti=20)
        assert second.parent_digest == first.digest
        assert verify_block(chain, second)[0]
        assert chain.height == 1

    def test_tampered_block_is_rejected(self):
        """Test that changing a transaction after forging breaks the digest."""
        chain = Chain()
        block = forge(TransactionPool(transactions=[make_tx()]), chain, tti=20)
        block.transactions[0].amount = 50.0
        ok, reason = verify_block(chain, block)
        assert not ok
        assert reason == "digest mismatch"
        assert chain.blocks == []

    def test_replayed_transaction_is_rejected(self):
        """Test that a transaction already on chain cannot be included again."""
        chain = Chain()
        verify_block(chain, forge(TransactionPool(transactions=[make_tx()]), chain, tti=20))
        replay = forge(TransactionPool(transactions=[make_tx()]), chain, tti=40, last_block_tti=20)
        ok, reason = verify_block(chain, replay)
        assert not ok
        assert "already on chain" in reason

    def test_wrong_parent(self):
        """Test that a block not on the tip is rejected."""
        chain = Chain()
        block = forge(TransactionPool(transactions=[make_tx()]), chain, tti=20)
        block.parent_digest = "f" * 64
        block.digest = block.compute_digest()
        assert verify_block(chain, block) == (False, "parent digest does not match the chain tip")

    def test_export_chain(self, tmp_path):
        """Test that every block becomes one JSON line."""
        chain = Chain()
        verify_block(chain, forge(TransactionPool(transactions=[make_tx()]), chain, tti=20))
        path = tmp_path / "chain.jsonl"
        export_chain(chain, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1
        assert list(json.loads(lines[0])) == list(Block.model_fields)
        assert Block.model_validate_json(lines[0]) == chain.blocks[0]


class TestValidatorsAndBalances:
    """Test stake-weighted selection and settlement."""

    def test_zero_stake_never_validates(self):
        """Test that zero-stake nodes are never drawn."""
        rng = np.random.default_rng(1)
        picks = {select_validator({1: 0.0, 2: 50.0}, rng) for _ in range(200)}
        assert picks == {2}

    def test_no_stake_at_all(self):
        """Test that an all-zero stake table raises."""
        with pytest.raises(NoEligibleValidatorError):
            select_validator({1: 0.0}, np.random.default_rng(0))

    def test_selection_is_stake_proportional(self):
        """Test that a triple stake is drawn three times as often."""
        rng = np.random.default_rng(2)
        picks = [select_validator({5: 100.0, 6: 300.0}, rng) for _ in range(10_000)]
        assert picks.count(6) / len(picks) == pytest.approx(0.75, abs=0.02)

    def test_settlement_conserves_tokens(self):
        """Test that only the minted reward changes the token total."""
        block = Block(height=0, parent_digest=GENESIS_PARENT, digest="", validator=10, timestamp=1.0, transactions=[make_tx(amount=1.0)], reward=1.0)
        balances = {0: 1000.0, 3: 1000.0}
        settle_block(block, balances)
        reward_validator(block, balances)
        assert balances[0] == pytest.approx(1000.0 - 1.01)
        assert balances[3] == pytest.approx(1001.0)
        assert balances[10] == pytest.approx(1.01)
        assert sum(balances.values()) == pytest.approx(2001.0)

    def test_self_payment_rejected(self):
        """Test that payer and payee must differ."""
        with pytest.raises(ValueError):
            make_tx(payer=3, payee=3)


class TestSubmission:
    """Test authentication and duplicate checks."""

    def test_spoofed_payer(self):
        """Test that a wrong credential is rejected as an attack."""
        registry = {0: credential_digest("secret-0")}
        pool = TransactionPool()
        result = submit_transaction(pool, make_tx(), "guess", registry)
        assert not result.accepted
        assert result.attack_detected
        assert len(pool) == 0

    def test_duplicates(self):
        """Test that a pooled or settled id cannot be submitted again."""
        registry = {0: credential_digest("secret-0")}
        pool = TransactionPool()
        assert submit_transaction(pool, make_tx(0), "secret-0", registry).accepted
        again = submit_transaction(pool, make_tx(0), "secret-0", registry)
        assert not again.accepted
        assert not again.attack_detected
        settled = submit_transaction(pool, make_tx(1), "secret-0", registry, settled_ids={"tx-1"})
        assert not settled.accepted


class TestReputation:
    """Test audits and beta reputation."""

    def test_fresh_node_scores_one_half(self):
        """Test the uninformed prior."""
        assert ReputationLedger().score(7) == 0.5

    def test_never_audit(self):
        """Test that with p_audit = 0 every result is paid and counts stay put."""
        ledger = ReputationLedger()
        rng = np.random.default_rng(0)
        for _ in range(50):
            outcome = audit_and_update_reputation(4, False, rng, 0.0, ledger)
            assert outcome == AuditOutcome(audited=False, correct=False, release_payment=True)
        assert ledger.score(4) == 0.5

    def test_always_audit(self):
        """Test that with p_audit = 1 false results are withheld and counted."""
        ledger = ReputationLedger()
        outcome = audit_and_update_reputation(4, False, np.random.default_rng(0), 1.0, ledger)
        assert outcome.audited
        assert not outcome.release_payment
        assert ledger.beta[4] == 1
        assert ledger.score(4) == pytest.approx(1 / 3)

    def test_always_on_attacker_gets_blacklisted(self):
        """Test that a node that always lies falls below theta within 100 tasks."""
        caught = 0
        for seed in range(50):
            ledger = ReputationLedger(threshold=0.3)
            rng = np.random.default_rng(seed)
            for _ in range(100):
                audit_and_update_reputation(1, apply_attack(AttackerProfile(node="sv-1", kind=AttackKind.ALWAYS_ON), 0.0), rng, 0.2, ledger)
            caught += ledger.is_blacklisted(1)
        assert caught >= 48

    def test_honest_score_never_drops(self):
        """Test that correct results only raise the score."""
        ledger = ReputationLedger()
        rng = np.random.default_rng(3)
        scores = [ledger.score(2)]
        for _ in range(100):
            audit_and_update_reputation(2, True, rng, 0.5, ledger)
            scores.append(ledger.score(2))
        assert all(b >= a for a, b in zip(scores, scores[1:]))
        assert not ledger.is_blacklisted(2)

    def test_reputation_frame(self):
        """Test the per-node reputation table."""
        ledger = ReputationLedger(alpha={2: 3}, beta={5: 4})
        frame = reputation_frame(ledger, {2: "sv-0", 5: "sv-3"})
        assert list(frame.columns) == ["node", "alpha", "beta", "score", "blacklisted"]
        assert frame["node"].tolist() == ["sv-0", "sv-3"]
        assert frame["blacklisted"].tolist() == [False, True]


class TestAttacks:
    """Test attacker result behaviour."""

    def test_honest_and_spoofer_compute_correctly(self):
        """Test that honest nodes and identity spoofers return correct results."""
        assert apply_attack(None, 3.0)
        assert apply_attack(AttackerProfile(node="sv-2", kind=AttackKind.IDENTITY_SPOOF), 3.0)

    def test_on_off_phases(self):
        """Test that on_off alternates correct and false periods."""
        profile = AttackerProfile(node="sv-1", kind=AttackKind.ON_OFF, on_period=5.0, off_period=5.0)
        assert apply_attack(profile, 2.0)
        assert not apply_attack(profile, 7.0)
        assert apply_attack(profile, 12.0)

    def test_on_off_needs_positive_periods(self):
        """Test that a zero period is rejected."""
        with pytest.raises(ValueError):
            AttackerProfile(node="sv-1", kind=AttackKind.ON_OFF, on_period=0.0)
