"""Blockchain-as-a-service emulation for the MEC system.

Accounts, the resource-trading contract with gas metering, the mining and
orphaning probability model, winner sampling and a hash-linked chain.
Identities are opaque random tokens; no real signatures are produced.
"""
from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from typing import Iterable, Optional, Sequence

import numpy as np


class LedgerError(Exception):
    """Base class for ledger failures."""


class UnknownAccount(LedgerError):
    pass


class UnknownContract(LedgerError):
    pass


class InsufficientBalance(LedgerError):
    def __init__(self, wallet: str, balance: float, amount: float):
        super().__init__(
            f"wallet {wallet[:12]}... holds {balance:.6g} tokens, needs {amount:.6g}"
        )
        self.wallet = wallet
        self.balance = balance
        self.amount = amount


class ChainIntegrityError(LedgerError):
    pass


# --------------------------------------------------------------------------
# accounts, contracts, transactions


@dataclass
class Account:
    user_id: str
    pubkey_stub: str
    privkey_stub: str
    wallet_address: str
    balance_tokens: float = 0.0


@dataclass(frozen=True)
class Contract:
    contract_id: int
    wallet_address: str
    user_id: str
    pubkey_stub: str
    demand_gcycles: float
    price_unit: float

    @property
    def amount(self) -> float:
        return self.price_unit * self.demand_gcycles


@dataclass(frozen=True)
class Transaction:
    kind: str  # "payment" or "mint"
    payer: Optional[str]
    payee: str
    amount: float
    contract_id: Optional[int] = None

    def record(self) -> dict:
        return {
            "kind": self.kind,
            "payer": self.payer,
            "payee": self.payee,
            "amount": self.amount,
            "contract_id": self.contract_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Transaction":
        return cls(rec["kind"], rec["payer"], rec["payee"], rec["amount"], rec["contract_id"])


@dataclass(frozen=True)
class GasSchedule:
    creation_trade_gas: int = 170948
    trading_gas: int = 3904827
    ether_per_gas: float = 2e-8
    usd_per_ether: float = 195.0

    def __post_init__(self):
        for name in ("creation_trade_gas", "trading_gas", "ether_per_gas", "usd_per_ether"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def scaled(self, factor: float) -> "GasSchedule":
        return GasSchedule(
            int(round(self.creation_trade_gas * factor)),
            int(round(self.trading_gas * factor)),
            self.ether_per_gas,
            self.usd_per_ether,
        )


def _truncate(value: Decimal, decimals: int) -> Decimal:
    return value.quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_DOWN)


def gas_to_cost(
    gas: int,
    schedule: GasSchedule = GasSchedule(),
    ether_decimals: int = 4,
    usd_decimals: int = 4,
) -> tuple[float, float]:
    """Convert a gas amount to (ether, USD) as a wallet would display them.

    Ether is truncated to ``ether_decimals`` places first and USD is derived
    from that displayed figure, then truncated to ``usd_decimals`` places.
    Decimal arithmetic keeps the truncation free of binary rounding noise.
    """
    if gas < 0:
        raise ValueError("gas must be non-negative")
    ether = _truncate(Decimal(gas) * Decimal(repr(schedule.ether_per_gas)), ether_decimals)
    usd = _truncate(ether * Decimal(repr(schedule.usd_per_ether)), usd_decimals)
    return float(ether), float(usd)


# --------------------------------------------------------------------------
# mining model


@dataclass(frozen=True)
class MiningModel:
    eta: float = 1.0 / 600.0
    kappa: float = 60.0  # seconds of propagation per KB of block
    block_size_kb: float = 5.0
    first_miner_reward: float = 30.0
    reward_per_kb: float = 0.0  # optional fee income, R = R_base + fee * b

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.kappa < 0 or self.first_miner_reward < 0 or self.reward_per_kb < 0:
            raise ValueError("kappa and rewards must be non-negative")
        if self.block_size_kb < 0:
            raise ValueError("block size must be non-negative")

    @property
    def reward(self) -> float:
        return self.first_miner_reward + self.reward_per_kb * self.block_size_kb

    @property
    def prop_time(self) -> float:
        return propagation_time(self.block_size_kb, self.kappa)

    @property
    def survival(self) -> float:
        """Probability that a mined block is not orphaned."""
        return math.exp(-self.eta * self.prop_time)


def relative_hash_power(p_mhs: float, total_mhs: float) -> float:
    if total_mhs <= 0:
        raise ValueError("total network hash power must be positive")
    if p_mhs < 0 or p_mhs > total_mhs:
        raise ValueError(f"hash power {p_mhs} outside [0, {total_mhs}]")
    return p_mhs / total_mhs


def propagation_time(block_size_kb: float, kappa: float) -> float:
    if block_size_kb < 0 or kappa < 0:
        raise ValueError("block size and kappa must be non-negative")
    return kappa * block_size_kb


def orphan_probability(eta: float, prop_time_s: float) -> float:
    if eta < 0 or prop_time_s < 0:
        raise ValueError("eta and propagation time must be non-negative")
    return 1.0 - math.exp(-eta * prop_time_s)


def mining_success_probability(rel_power: float, eta: float, prop_time_s: float) -> float:
    if not 0.0 <= rel_power <= 1.0:
        raise ValueError(f"relative hash power {rel_power} outside [0, 1]")
    if eta < 0 or prop_time_s < 0:
        raise ValueError("eta and propagation time must be non-negative")
    return rel_power * math.exp(-eta * prop_time_s)


def expected_reward(reward_tokens: float, success_prob: float) -> float:
    if not 0.0 <= success_prob <= 1.0:
        raise ValueError(f"probability {success_prob} outside [0, 1]")
    return reward_tokens * success_prob


def sample_winner(success_probs: Sequence[float], rng: np.random.Generator) -> Optional[int]:
    """Draw the slot's block producer among the MEC servers.

    Server ``m`` wins with probability ``success_probs[m]``; the residual mass
    is an outside miner and yields ``None``.  A vector summing past one is
    renormalised.
    """
    probs = np.asarray(success_probs, dtype=float)
    if probs.size == 0:
        return None
    if np.any(probs < 0) or np.any(probs > 1) or not np.all(np.isfinite(probs)):
        raise ValueError("success probabilities must lie in [0, 1]")
    total = probs.sum()
    if total > 1.0:
        probs = probs / total
    u = rng.random()
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    if idx >= probs.size:
        return None
    return idx


# --------------------------------------------------------------------------
# chain

GENESIS_PREV = "0" * 64


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=False, separators=(",", ":"), allow_nan=False).encode()


@dataclass(frozen=True)
class Block:
    height: int
    prev_digest: str
    txs: tuple
    miner: Optional[int]
    digest: str = ""

    def body(self) -> dict:
        return {
            "height": self.height,
            "prev_digest": self.prev_digest,
            "miner": self.miner,
            "txs": [tx.record() for tx in self.txs],
        }

    def compute_digest(self) -> str:
        return hashlib.sha256(_canonical(self.body())).hexdigest()

    def to_line(self) -> str:
        rec = self.body()
        rec["digest"] = self.digest
        return _canonical(rec).decode()

    @classmethod
    def from_line(cls, line: str) -> "Block":
        rec = json.loads(line)
        if list(rec) != ["height", "prev_digest", "miner", "txs", "digest"]:
            raise ChainIntegrityError("non-canonical block record")
        txs = tuple(Transaction.from_record(t) for t in rec["txs"])
        return cls(rec["height"], rec["prev_digest"], txs, rec["miner"], rec["digest"])


def make_block(height: int, prev_digest: str, txs: Iterable[Transaction], miner: Optional[int]) -> Block:
    blk = Block(height, prev_digest, tuple(txs), miner)
    return Block(blk.height, blk.prev_digest, blk.txs, blk.miner, blk.compute_digest())


def append_block(chain: list, txs: Iterable[Transaction], miner: Optional[int]) -> Block:
    if not chain:
        raise ChainIntegrityError("chain has no genesis block")
    head = chain[-1]
    blk = make_block(head.height + 1, head.digest, txs, miner)
    chain.append(blk)
    return blk


def verify_chain(chain: Sequence[Block]) -> bool:
    if not chain:
        return False
    prev = GENESIS_PREV
    for k, blk in enumerate(chain):
        if blk.height != k or blk.prev_digest != prev:
            return False
        if blk.compute_digest() != blk.digest:
            return False
        prev = blk.digest
    return True


def export_chain(chain: Sequence[Block]) -> str:
    return "".join(blk.to_line() + "\n" for blk in chain)


def import_chain(text: str | bytes) -> list[Block]:
    """Parse exported records; raises ChainIntegrityError on any defect.

    Records are separated by ``\n`` only and the export must end with one,
    so no byte of the file is outside the verified content.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError:
            raise ChainIntegrityError("export is not valid UTF-8") from None
    if not text.endswith("\n"):
        raise ChainIntegrityError("export must end with a newline")
    chain = []
    for line in text[:-1].split("\n"):
        try:
            blk = Block.from_line(line)
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ChainIntegrityError(f"unreadable block record: {exc}") from None
        # byte-exact round trip rules out equivalent-but-altered encodings
        try:
            canonical = blk.to_line()
        except (ValueError, TypeError):  # e.g. an amount mutated to an overflowing float
            raise ChainIntegrityError(f"block {blk.height} holds unencodable values") from None
        if canonical != line:
            raise ChainIntegrityError(f"block {blk.height} is not canonically encoded")
        chain.append(blk)
    if not verify_chain(chain):
        raise ChainIntegrityError("digest linkage broken")
    return chain


def verify_export(text: str | bytes) -> bool:
    try:
        import_chain(text)
    except ChainIntegrityError:
        return False
    return True


# --------------------------------------------------------------------------
# ledger


@dataclass
class Ledger:
    gas: GasSchedule = field(default_factory=GasSchedule)
    seed: Optional[int] = None

    def __post_init__(self):
        self._rng = random.Random(self.seed)
        self.accounts: dict[str, Account] = {}
        self.contracts: dict[int, Contract] = {}
        self.pending: list[Transaction] = []
        self.chain: list[Block] = [make_block(0, GENESIS_PREV, (), None)]
        self.gas_used = 0
        self.minted = 0.0

    def _token(self) -> str:
        return f"{self._rng.getrandbits(128):032x}"

    def register_account(self, initial_balance: float = 0.0) -> Account:
        if initial_balance < 0:
            raise ValueError("initial balance must be non-negative")
        wallet = self._token()
        while wallet in self.accounts:
            wallet = self._token()
        acct = Account(self._token(), self._token(), self._token(), wallet, float(initial_balance))
        self.accounts[wallet] = acct
        return acct

    def account(self, wallet: str) -> Account:
        try:
            return self.accounts[wallet]
        except KeyError:
            raise UnknownAccount(wallet) from None

    def balance(self, wallet: str) -> float:
        return self.account(wallet).balance_tokens

    def total_balance(self) -> float:
        return math.fsum(a.balance_tokens for a in self.accounts.values())

    def creation_trade(self, wallet: str, demand_gcycles: float, price_unit: float) -> Contract:
        acct = self.account(wallet)
        if demand_gcycles <= 0 or price_unit <= 0:
            raise ValueError("demand and price must be positive")
        c = Contract(len(self.contracts), acct.wallet_address, acct.user_id,
                     acct.pubkey_stub, float(demand_gcycles), float(price_unit))
        self.contracts[c.contract_id] = c
        self.gas_used += self.gas.creation_trade_gas
        return c

    def trading(self, contract: Contract | int, esp_wallet: str) -> Transaction:
        cid = contract if isinstance(contract, int) else contract.contract_id
        if cid not in self.contracts:
            raise UnknownContract(cid)
        c = self.contracts[cid]
        payer = self.account(c.wallet_address)
        payee = self.account(esp_wallet)
        amount = c.amount
        if payer.balance_tokens < amount:
            raise InsufficientBalance(payer.wallet_address, payer.balance_tokens, amount)
        payer.balance_tokens -= amount
        payee.balance_tokens += amount
        tx = Transaction("payment", payer.wallet_address, payee.wallet_address, amount, cid)
        self.pending.append(tx)
        self.gas_used += self.gas.trading_gas
        return tx

    def mint(self, wallet: str, amount: float) -> Transaction:
        acct = self.account(wallet)
        acct.balance_tokens += amount
        self.minted += amount
        tx = Transaction("mint", None, wallet, float(amount))
        self.pending.append(tx)
        return tx

    def seal_block(self, miner: Optional[int]) -> Block:
        blk = append_block(self.chain, self.pending, miner)
        self.pending = []
        return blk

    def verify(self) -> bool:
        return verify_chain(self.chain)
