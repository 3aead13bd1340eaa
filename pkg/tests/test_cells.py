import numpy as np
import pytest

from cogload import cells
from cogload.cells import (CellState, ZInjection, hyper_lstm_step, hyper_rowscale, init_hyper_lstm, init_lstm,
                           init_mixture, lstm_step, m_hyper_step, mixture_z, param_count, slice_mixture)
from cogload.errors import ShapeError
from cogload.model import DEFAULT_SIZES
from cogload.tensor import Tensor, concat, grad_check, parameter

GATES = ('i', 'f', 'o', 'c')


########## reference evaluation, numpy only ##########

def ref_ln(v, g, b, eps=1e-5):
    mu = v.mean()
    var = ((v - mu) ** 2).mean()
    return g * (v - mu) / np.sqrt(var + eps) + b


def ref_sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def ref_update(pre, c_prev, P, ln):
    if ln:
        pre = {g: ref_ln(pre[g], P['ln_g_' + g], P['ln_b_' + g]) for g in GATES}
    i, f, o = ref_sigmoid(pre['i']), ref_sigmoid(pre['f']), ref_sigmoid(pre['o'])
    c = f * c_prev + i * np.tanh(pre['c'])
    c_out = ref_ln(c, P['ln_g_cell'], P['ln_b_cell']) if ln else c
    return o * np.tanh(c_out), c


def ref_lstm(P, h, c, x, ln):
    pre = {g: P['W_' + g] @ h + P['I_' + g] @ x + P['b_' + g] for g in GATES}
    return ref_update(pre, c, P, ln)


def ref_hyper(P, A, h, c, ha, ca, x, ln):
    ha, ca = ref_lstm(A, ha, ca, np.concatenate([x, h]), ln)
    pre = {}
    for g in GATES:
        d_w = P['Whd_' + g] @ (P['Whz_' + g] @ ha + P['bhz_' + g])
        d_i = P['Wxd_' + g] @ (P['Wxz_' + g] @ ha + P['bxz_' + g])
        b = P['Wbd_' + g] @ (P['Wbz_' + g] @ ha) + P['b0_' + g]
        pre[g] = (d_w[:, None] * P['W_' + g]) @ h + (d_i[:, None] * P['I_' + g]) @ x + b
    h, c = ref_update(pre, c, P, ln)
    return h, c, ha, ca


def arrays(p):
    return {k: t.data for k, t in p.tensors.items()}


def randomize(p, rng, scale=0.5):
    return p.replace({k: parameter(rng.normal(scale=scale, size=t.shape)) for k, t in p.named().items()})


def random_state(n, rng):
    return CellState(Tensor(rng.uniform(-0.9, 0.9, n)), Tensor(rng.normal(size=n)))


def lstm_count(n_h, n_x, ln):
    return 4 * (n_h * n_h + n_h * n_x + n_h) + (10 * n_h if ln else 0)


def hyper_count(n_h, n_x, n_aux, n_z, ln):
    heads = 2 * (n_z * n_aux + n_z + n_h * n_z) + n_z * n_aux + n_h * n_z
    return lstm_count(n_h, n_x, ln) + 4 * heads + lstm_count(n_aux, n_x + n_h, ln)


def mixture_count(n_h, n_x, n_aux, n_z, ln):
    banks = 4 * n_z * (n_h * n_h + n_h * n_x + n_h)
    return banks + n_z * n_aux + n_z + (10 * n_h if ln else 0) + lstm_count(n_aux, n_x + n_h, ln)


class TestLstmStep:

    def test_zero_params_give_half_gates(self, rng):
        p = init_lstm(3, 2, rng)
        p = p.replace({k: parameter(np.zeros(t.shape)) for k, t in p.tensors.items()})
        s = lstm_step(p, CellState.zeros(3), Tensor(rng.normal(size=2)))
        assert np.array_equal(s.c.data, np.zeros(3))
        assert np.array_equal(s.h.data, np.zeros(3))

    @pytest.mark.parametrize('ln', [True, False])
    def test_saturated_forget_gate_keeps_memory(self, rng, ln):
        p = init_lstm(4, 3, rng, layer_norm=ln)
        zeros = {k: parameter(np.zeros(t.shape)) for k, t in p.tensors.items() if not k.startswith('ln_g')}
        zeros['ln_b_f' if ln else 'b_f'] = parameter(np.full(4, 50.0))
        p = p.replace(zeros)
        s = random_state(4, rng)
        out = lstm_step(p, s, Tensor(rng.normal(size=3)))
        assert np.allclose(out.c.data, s.c.data, atol=1e-10, rtol=0)

    @pytest.mark.parametrize('ln', [True, False])
    def test_matches_reference(self, rng, ln):
        for _ in range(10):
            p = randomize(init_lstm(5, 3, rng, ln), rng)
            s, x = random_state(5, rng), rng.normal(size=3)
            h, c = ref_lstm(arrays(p), s.h.data, s.c.data, x, ln)
            out = lstm_step(p, s, Tensor(x))
            assert np.allclose(out.h.data, h, atol=1e-12)
            assert np.allclose(out.c.data, c, atol=1e-12)

    def test_forget_offset_on_init(self, rng):
        with_ln, without = init_lstm(3, 2, rng), init_lstm(3, 2, rng, layer_norm=False)
        assert np.array_equal(with_ln['ln_b_f'].data, np.ones(3))
        assert np.array_equal(with_ln['b_f'].data, np.zeros(3))
        assert np.array_equal(without['b_f'].data, np.ones(3))

    def test_shape_mismatch(self, rng):
        p = init_lstm(3, 2, rng)
        with pytest.raises(ShapeError):
            lstm_step(p, CellState.zeros(3), Tensor(np.zeros(4)))
        with pytest.raises(ShapeError):
            lstm_step(p, CellState.zeros(5), Tensor(np.zeros(2)))

    def test_batch_matches_single_rows(self, rng):
        p = randomize(init_lstm(4, 3, rng), rng)
        h, c, x = rng.uniform(-0.9, 0.9, (6, 4)), rng.normal(size=(6, 4)), rng.normal(size=(6, 3))
        batched = lstm_step(p, CellState(Tensor(h), Tensor(c)), Tensor(x))
        for b in range(6):
            single = lstm_step(p, CellState(Tensor(h[b]), Tensor(c[b])), Tensor(x[b]))
            assert np.allclose(batched.h.data[b], single.h.data, atol=1e-12)


class TestHyperRowscale:

    def test_identity_scaling(self, rng):
        base = rng.normal(size=(5, 3))
        out = hyper_rowscale(Tensor(base), Tensor(np.zeros((4, 2))), Tensor(np.ones(4)),
                             Tensor(np.full((5, 4), 0.25)), Tensor(rng.normal(size=2)))
        assert np.array_equal(out.data, base)

    def test_zero_case(self, rng):
        out = hyper_rowscale(Tensor(rng.normal(size=(5, 5))), Tensor(rng.normal(size=(4, 2))), Tensor(np.zeros(4)),
                             Tensor(rng.normal(size=(5, 4))), Tensor(np.zeros(2)))
        assert np.array_equal(out.data, np.zeros((5, 5)))

    def test_rows_scale_by_d(self, rng):
        base, W_hz, b_h, W_hd, h = (rng.normal(size=s) for s in ((5, 3), (4, 2), (4,), (5, 4), (2,)))
        out = hyper_rowscale(Tensor(base), Tensor(W_hz), Tensor(b_h), Tensor(W_hd), Tensor(h)).data
        d = W_hd @ (W_hz @ h + b_h)
        assert np.allclose(out, d[:, None] * base, atol=1e-12)
        doubled = hyper_rowscale(Tensor(base), Tensor(W_hz), Tensor(b_h), Tensor(2 * W_hd), Tensor(h)).data
        assert np.allclose(doubled, 2 * out, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            hyper_rowscale(Tensor(np.ones((5, 3))), Tensor(np.ones((4, 2))), Tensor(np.ones(4)),
                           Tensor(np.ones((6, 4))), Tensor(np.ones(2)))


class TestHyperLstmStep:

    def test_initial_heads_reduce_to_base_lstm(self, rng):
        p = init_hyper_lstm(5, 3, 4, 4, rng)
        base = {**{k: v for k, v in p.tensors.items() if k[:2] in ('W_', 'I_') or k.startswith('ln_')},
                **{'b_' + g: p['b0_' + g] for g in GATES}}
        lstm = cells.LstmParams(5, 3, base, True)
        s, x = random_state(5, rng), Tensor(rng.normal(size=3))
        main, _ = hyper_lstm_step(p, s, random_state(4, rng), x)
        ref = lstm_step(lstm, s, x)
        assert np.allclose(main.h.data, ref.h.data, atol=1e-12)
        assert np.allclose(main.c.data, ref.c.data, atol=1e-12)

    def test_zero_generated_weights(self, rng):
        p = init_hyper_lstm(4, 3, 2, 2, rng, layer_norm=False)
        zero = {k: parameter(np.zeros(t.shape)) for k, t in p.tensors.items()
                if k.startswith(('bhz_', 'bxz_', 'Wbz_', 'b0_'))}
        zero.update({'aux.' + k: parameter(np.zeros(t.shape)) for k, t in p.aux.tensors.items()})
        p = p.replace(zero)
        main, aux = hyper_lstm_step(p, CellState.zeros(4), CellState.zeros(2), Tensor(rng.normal(size=3)))
        assert np.array_equal(aux.h.data, np.zeros(2))
        assert np.array_equal(main.h.data, np.zeros(4))
        assert np.array_equal(main.c.data, np.zeros(4))

    @pytest.mark.parametrize('ln', [True, False])
    def test_matches_reference(self, rng, ln):
        for _ in range(10):
            p = randomize(init_hyper_lstm(5, 3, 4, 2, rng, ln), rng)
            s, sa, x = random_state(5, rng), random_state(4, rng), rng.normal(size=3)
            h, c, ha, ca = ref_hyper(arrays(p), arrays(p.aux), s.h.data, s.c.data, sa.h.data, sa.c.data, x, ln)
            main, aux = hyper_lstm_step(p, s, sa, Tensor(x))
            assert np.allclose(main.h.data, h, atol=1e-12)
            assert np.allclose(main.c.data, c, atol=1e-12)
            assert np.allclose(aux.h.data, ha, atol=1e-12)
            assert np.allclose(aux.c.data, ca, atol=1e-12)

    def test_aux_reads_input_and_hidden(self, rng):
        p = init_hyper_lstm(5, 3, 4, 4, rng)
        assert p.aux.n_x == 3 + 5
        assert p.aux.n_h == 4


class TestMixture:

    def test_z_examples(self, rng):
        p = init_mixture(3, 2, 4, 5, rng)
        h = Tensor(rng.normal(size=4))
        flat = p.replace({'Wz': parameter(np.zeros((5, 4))), 'bz': parameter(np.zeros(5))})
        assert np.array_equal(mixture_z(flat, h).data, np.full(5, 0.5))
        hot = p.replace({'bz': parameter(np.array([50.0, 0, 0, 0, 0]))})
        assert mixture_z(hot, Tensor(np.zeros(4))).data[0] >= 1 - 1e-10
        expected = 1.0 / (1.0 + np.exp(-(p['Wz'].data @ h.data + p['bz'].data)))
        z = mixture_z(p, h).data
        assert np.allclose(z, expected, atol=1e-12)
        assert ((z > 0) & (z < 1)).all()

    @pytest.mark.parametrize('n_configs', [100])
    def test_one_hot_injection_reduces_to_sliced_lstm(self, n_configs):
        rng = np.random.default_rng(2024)
        for _ in range(n_configs):
            n_h, n_x, n_aux, n_z = (int(rng.integers(2, 7)), int(rng.integers(1, 6)),
                                    int(rng.integers(2, 6)), int(rng.integers(1, 5)))
            ln = bool(rng.integers(2))
            p = randomize(init_mixture(n_h, n_x, n_aux, n_z, rng, ln), rng)
            k = int(rng.integers(n_z))
            inject = ZInjection(np.eye(n_z)[k])
            ref = slice_mixture(p, k)
            s, sa, s_ref = CellState.zeros(n_h), CellState.zeros(n_aux), CellState.zeros(n_h)
            for x in rng.normal(size=(10, n_x)):
                s, sa, z = m_hyper_step(p, s, sa, Tensor(x), inject)
                s_ref = lstm_step(ref, s_ref, Tensor(x))
                assert np.array_equal(z.data, np.eye(n_z)[k])
                assert np.abs(s.h.data - s_ref.h.data).max() <= 1e-12
                assert np.abs(s.c.data - s_ref.c.data).max() <= 1e-12
                assert (np.abs(s.h.data) < 1).all()

    def test_zero_injection(self, rng):
        p = init_mixture(4, 3, 2, 3, rng, layer_norm=False)
        main, _, _ = m_hyper_step(p, CellState.zeros(4), CellState.zeros(2), Tensor(rng.normal(size=3)),
                                  ZInjection(np.zeros(3)))
        assert np.array_equal(main.c.data, np.zeros(4))
        assert np.array_equal(main.h.data, np.zeros(4))

    def test_generated_weights_are_linear_in_z(self, rng):
        from cogload.tensor import mode3_contract
        p = randomize(init_mixture(4, 3, 2, 3, rng), rng)
        bank = p['W_c']
        mid = mode3_contract(bank, np.array([0.5, 0.5, 0.0])).data
        assert np.allclose(mid, (bank.data[:, :, 0] + bank.data[:, :, 1]) / 2, atol=1e-12)

    def test_wrong_injection_length(self, rng):
        p = init_mixture(4, 3, 2, 3, rng)
        with pytest.raises(ShapeError):
            m_hyper_step(p, CellState.zeros(4), CellState.zeros(2), Tensor(np.zeros(3)), ZInjection(np.ones(2)))

    def test_computed_z_is_returned(self, rng):
        p = randomize(init_mixture(4, 3, 2, 3, rng), rng)
        _, aux, z = m_hyper_step(p, random_state(4, rng), random_state(2, rng), Tensor(rng.normal(size=3)))
        assert np.array_equal(z.data, mixture_z(p, aux.h).data)

    def test_slice_out_of_range(self, rng):
        with pytest.raises(IndexError):
            slice_mixture(init_mixture(3, 2, 2, 2, rng), 2)

    def test_batch_matches_single_rows(self, rng):
        p = randomize(init_mixture(4, 3, 2, 3, rng), rng)
        x = rng.normal(size=(5, 3))
        s, sa, _ = m_hyper_step(p, CellState.zeros(4, (5,)), CellState.zeros(2, (5,)), Tensor(x))
        for b in range(5):
            one, _, _ = m_hyper_step(p, CellState.zeros(4), CellState.zeros(2), Tensor(x[b]))
            assert np.allclose(s.h.data[b], one.h.data, atol=1e-12)


class TestParamCount:

    def test_small_lstm(self, rng):
        assert param_count(init_lstm(2, 3, rng, layer_norm=False)) == 48

    def test_table_configurations_match_enumeration(self, rng):
        lstm, hyper, mix = DEFAULT_SIZES['lstm'], DEFAULT_SIZES['hyperlstm'], DEFAULT_SIZES['mhyperlstm']
        counts = {
            'lstm': (param_count(init_lstm(lstm.n_h, 64, rng)), lstm_count(lstm.n_h, 64, True)),
            'hyperlstm': (param_count(init_hyper_lstm(hyper.n_h, 64, hyper.n_aux, hyper.n_z, rng)),
                          hyper_count(hyper.n_h, 64, hyper.n_aux, hyper.n_z, True)),
            'mhyperlstm': (param_count(init_mixture(mix.n_h, 64, mix.n_aux, mix.n_z, rng)),
                           mixture_count(mix.n_h, 64, mix.n_aux, mix.n_z, True)),
        }
        for got, expected in counts.values():
            assert got == expected
        values = [got for got, _ in counts.values()]
        for a in values:
            for b in values:
                assert abs(a - b) / max(a, b) <= 0.2

    def test_one_more_hidden_unit_costs_parameters(self, rng):
        assert param_count(init_lstm(4, 3, rng)) > param_count(init_lstm(3, 3, rng))
        assert param_count(init_hyper_lstm(4, 3, 2, 2, rng)) > param_count(init_hyper_lstm(3, 3, 2, 2, rng))
        assert param_count(init_mixture(4, 3, 2, 2, rng)) > param_count(init_mixture(3, 3, 2, 2, rng))


########## gradient checks ##########

def _cell(variant, rng):
    if variant == 'lstm':
        p = init_lstm(3, 2, rng)
    elif variant == 'hyperlstm':
        p = init_hyper_lstm(3, 2, 3, 2, rng)
    else:
        p = init_mixture(3, 2, 3, 2, rng)
    return randomize(p, rng)


def _unrolled(p, steps):
    names = list(p.named())

    def fn(*leaves):
        q = p.replace(dict(zip(names, leaves)))
        rest = leaves[len(names):]
        xs, (h0, c0) = rest[:steps], rest[steps:]
        states = (CellState(h0, c0),)
        if p.variant != 'lstm':
            states += (CellState.zeros(p.n_aux),)
        outs = []
        for x in xs:
            states = cells.advance(q, states, x)
            outs += [s.h for s in states] + [s.c for s in states]
        return concat(outs)
    return fn


def _check_cell(variant, rng, steps):
    p = _cell(variant, rng)
    inputs = [t.data for t in p.named().values()]
    inputs += [rng.normal(size=p.n_x) for _ in range(steps)]
    inputs += [rng.uniform(-0.9, 0.9, p.n_h), rng.normal(size=p.n_h)]
    return grad_check(_unrolled(p, steps), inputs, step=1e-5, seed=int(rng.integers(1 << 30)))


@pytest.mark.parametrize('variant', ['lstm', 'hyperlstm', 'mhyperlstm'])
def test_single_step_gradients(variant):
    rng = np.random.default_rng(11)
    for _ in range(20):
        report = _check_cell(variant, rng, 1)
        assert report.passed, report


@pytest.mark.parametrize('variant', ['lstm', 'hyperlstm', 'mhyperlstm'])
def test_unrolled_gradients(variant):
    rng = np.random.default_rng(12)
    report = _check_cell(variant, rng, 5)
    assert report.passed, report


@pytest.mark.slow
@pytest.mark.parametrize('variant', ['lstm', 'hyperlstm', 'mhyperlstm'])
def test_unrolled_gradients_many_instances(variant):
    rng = np.random.default_rng(13)
    for _ in range(20):
        report = _check_cell(variant, rng, 5)
        assert report.passed, report
