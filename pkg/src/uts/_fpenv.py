"""Floating-point environment control for dense solves.

Exponential kernels at intermediate scales fill Cholesky factors with
subnormal numbers, which x86 cores process up to two orders of magnitude
slower. Setting the flush-to-zero and denormals-are-zero bits of MXCSR for
the duration of a solve avoids that; the affected values are below 1e-307
and far beneath every tolerance used downstream.
"""

from __future__ import annotations

import platform
from contextlib import contextmanager

_FTZ_DAZ = 0x8040
_X86 = platform.machine().lower() in ("x86_64", "amd64", "i386", "i686")

if _X86:
    from llvmlite import ir
    from numba import njit, types
    from numba.extending import intrinsic

    def _csr_call(builder, name, ptr):
        fnty = ir.FunctionType(ir.VoidType(), [ir.IntType(8).as_pointer()])
        fn = builder.module.declare_intrinsic(name, fnty=fnty)
        builder.call(fn, [builder.bitcast(ptr, ir.IntType(8).as_pointer())])

    @intrinsic
    def _stmxcsr(typingctx):
        def codegen(context, builder, sig, args):
            ptr = builder.alloca(ir.IntType(32))
            _csr_call(builder, "llvm.x86.sse.stmxcsr", ptr)
            return builder.load(ptr)

        return types.int32(), codegen

    @intrinsic
    def _ldmxcsr(typingctx, value):
        def codegen(context, builder, sig, args):
            ptr = builder.alloca(ir.IntType(32))
            builder.store(args[0], ptr)
            _csr_call(builder, "llvm.x86.sse.ldmxcsr", ptr)
            return context.get_dummy_value()

        return types.void(types.int32), codegen

    @njit(cache=True)
    def _get_csr():
        return _stmxcsr()

    @njit(cache=True)
    def _set_csr(value):
        _ldmxcsr(value)


@contextmanager
def flush_subnormals():
    """Treat subnormal floats as zero inside the block (x86 only, no-op elsewhere)."""
    if not _X86:
        yield
        return
    old = int(_get_csr())
    _set_csr(old | _FTZ_DAZ)
    try:
        yield
    finally:
        _set_csr(old)
