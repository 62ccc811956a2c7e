"""Blocks, transactions, mempool, ledger state and persistence.

Import submodules directly (``trchain.chain.block``, ``trchain.chain.state``);
the consensus kernel depends on the block encoding, and the state depends on
the consensus kernel.
"""
