/* Atomic 64-bit operations on contiguous buffers (numpy arrays).
 *
 * Float updates are compare-and-swap retry loops on the raw bit pattern, so
 * concurrent read-modify-write at the same index never loses an update and
 * readers never observe a torn scalar.  Loops over index ranges release the
 * GIL; element order inside every loop is ascending.
 */

#define PY_SSIZE_T_CLEAN
#include <Python.h>

#include <stdint.h>
#include <string.h>

typedef struct {
    Py_buffer view;
    Py_ssize_t len; /* element count */
} buf64;

static int
get_buf64(PyObject *obj, buf64 *b, int writable, const char *name)
{
    int flags = PyBUF_C_CONTIGUOUS | (writable ? PyBUF_WRITABLE : 0);
    if (PyObject_GetBuffer(obj, &b->view, flags) != 0)
        return -1;
    if (b->view.itemsize != 8) {
        PyBuffer_Release(&b->view);
        PyErr_Format(PyExc_ValueError, "%s: expected 8-byte items, got %zd",
                     name, b->view.itemsize);
        return -1;
    }
    if (((uintptr_t)b->view.buf & 7) != 0) {
        PyBuffer_Release(&b->view);
        PyErr_Format(PyExc_ValueError, "%s: buffer is not 8-byte aligned", name);
        return -1;
    }
    b->len = b->view.len / 8;
    return 0;
}

static inline double
atomic_load_f64(const uint64_t *p)
{
    uint64_t bits = __atomic_load_n(p, __ATOMIC_ACQUIRE);
    double v;
    memcpy(&v, &bits, 8);
    return v;
}

static inline void
atomic_store_f64(uint64_t *p, double v)
{
    uint64_t bits;
    memcpy(&bits, &v, 8);
    __atomic_store_n(p, bits, __ATOMIC_RELEASE);
}

/* p[0] += add, retried until the CAS lands. */
static inline void
atomic_accum_f64(uint64_t *p, double add)
{
    uint64_t seen = __atomic_load_n(p, __ATOMIC_RELAXED);
    for (;;) {
        double cur;
        memcpy(&cur, &seen, 8);
        double next = cur + add;
        uint64_t bits;
        memcpy(&bits, &next, 8);
        if (__atomic_compare_exchange_n(p, &seen, bits, 1,
                                        __ATOMIC_ACQ_REL, __ATOMIC_RELAXED))
            return;
        /* seen now holds the conflicting value; retry against it */
    }
}

static int
check_index(Py_ssize_t i, Py_ssize_t len)
{
    if (i < 0 || i >= len) {
        PyErr_Format(PyExc_IndexError, "index %zd out of range [0, %zd)", i, len);
        return -1;
    }
    return 0;
}

static PyObject *
py_load_f64(PyObject *self, PyObject *args)
{
    PyObject *obj;
    Py_ssize_t i;
    if (!PyArg_ParseTuple(args, "On", &obj, &i))
        return NULL;
    buf64 b;
    if (get_buf64(obj, &b, 0, "values") != 0)
        return NULL;
    if (check_index(i, b.len) != 0) {
        PyBuffer_Release(&b.view);
        return NULL;
    }
    double v = atomic_load_f64((uint64_t *)b.view.buf + i);
    PyBuffer_Release(&b.view);
    return PyFloat_FromDouble(v);
}

static PyObject *
py_store_f64(PyObject *self, PyObject *args)
{
    PyObject *obj;
    Py_ssize_t i;
    double v;
    if (!PyArg_ParseTuple(args, "Ond", &obj, &i, &v))
        return NULL;
    buf64 b;
    if (get_buf64(obj, &b, 1, "values") != 0)
        return NULL;
    if (check_index(i, b.len) != 0) {
        PyBuffer_Release(&b.view);
        return NULL;
    }
    atomic_store_f64((uint64_t *)b.view.buf + i, v);
    PyBuffer_Release(&b.view);
    Py_RETURN_NONE;
}

static PyObject *
py_load_i64(PyObject *self, PyObject *args)
{
    PyObject *obj;
    Py_ssize_t i;
    if (!PyArg_ParseTuple(args, "On", &obj, &i))
        return NULL;
    buf64 b;
    if (get_buf64(obj, &b, 0, "counter") != 0)
        return NULL;
    if (check_index(i, b.len) != 0) {
        PyBuffer_Release(&b.view);
        return NULL;
    }
    int64_t v = __atomic_load_n((int64_t *)b.view.buf + i, __ATOMIC_ACQUIRE);
    PyBuffer_Release(&b.view);
    return PyLong_FromLongLong(v);
}

static PyObject *
py_store_i64(PyObject *self, PyObject *args)
{
    PyObject *obj;
    Py_ssize_t i;
    long long v;
    if (!PyArg_ParseTuple(args, "OnL", &obj, &i, &v))
        return NULL;
    buf64 b;
    if (get_buf64(obj, &b, 1, "counter") != 0)
        return NULL;
    if (check_index(i, b.len) != 0) {
        PyBuffer_Release(&b.view);
        return NULL;
    }
    __atomic_store_n((int64_t *)b.view.buf + i, (int64_t)v, __ATOMIC_RELEASE);
    PyBuffer_Release(&b.view);
    Py_RETURN_NONE;
}

static PyObject *
py_fetch_add_i64(PyObject *self, PyObject *args)
{
    PyObject *obj;
    Py_ssize_t i;
    long long delta;
    if (!PyArg_ParseTuple(args, "OnL", &obj, &i, &delta))
        return NULL;
    buf64 b;
    if (get_buf64(obj, &b, 1, "counter") != 0)
        return NULL;
    if (check_index(i, b.len) != 0) {
        PyBuffer_Release(&b.view);
        return NULL;
    }
    int64_t old = __atomic_fetch_add((int64_t *)b.view.buf + i, (int64_t)delta,
                                     __ATOMIC_ACQ_REL);
    PyBuffer_Release(&b.view);
    return PyLong_FromLongLong(old);
}

/* out[e] = src[e] for ascending e, one atomic load per element. */
static PyObject *
py_snapshot_f64(PyObject *self, PyObject *args)
{
    PyObject *src_o, *out_o;
    if (!PyArg_ParseTuple(args, "OO", &src_o, &out_o))
        return NULL;
    buf64 src, out;
    if (get_buf64(src_o, &src, 0, "src") != 0)
        return NULL;
    if (get_buf64(out_o, &out, 1, "out") != 0) {
        PyBuffer_Release(&src.view);
        return NULL;
    }
    if (src.len != out.len) {
        PyBuffer_Release(&src.view);
        PyBuffer_Release(&out.view);
        PyErr_SetString(PyExc_ValueError, "src/out length mismatch");
        return NULL;
    }
    uint64_t *s = (uint64_t *)src.view.buf;
    double *o = (double *)out.view.buf;
    Py_ssize_t n = src.len;
    Py_BEGIN_ALLOW_THREADS
    for (Py_ssize_t e = 0; e < n; e++)
        o[e] = atomic_load_f64(s + e);
    Py_END_ALLOW_THREADS
    PyBuffer_Release(&src.view);
    PyBuffer_Release(&out.view);
    Py_RETURN_NONE;
}

/* Per ascending index: load the writer tag, then the value.  Reading the tag
 * first means a racing write can only make the recorded tag older than the
 * value actually seen, never newer. */
static PyObject *
py_snapshot_tagged_f64(PyObject *self, PyObject *args)
{
    PyObject *src_o, *tags_o, *out_o, *out_tags_o;
    if (!PyArg_ParseTuple(args, "OOOO", &src_o, &tags_o, &out_o, &out_tags_o))
        return NULL;
    buf64 src, tags, out, otags;
    if (get_buf64(src_o, &src, 0, "src") != 0)
        return NULL;
    if (get_buf64(tags_o, &tags, 0, "tags") != 0)
        goto fail1;
    if (get_buf64(out_o, &out, 1, "out") != 0)
        goto fail2;
    if (get_buf64(out_tags_o, &otags, 1, "out_tags") != 0)
        goto fail3;
    if (src.len != out.len || src.len != tags.len || src.len != otags.len) {
        PyErr_SetString(PyExc_ValueError, "buffer length mismatch");
        PyBuffer_Release(&otags.view);
        goto fail3;
    }
    {
        uint64_t *s = (uint64_t *)src.view.buf;
        int64_t *t = (int64_t *)tags.view.buf;
        double *o = (double *)out.view.buf;
        int64_t *ot = (int64_t *)otags.view.buf;
        Py_ssize_t n = src.len;
        Py_BEGIN_ALLOW_THREADS
        for (Py_ssize_t e = 0; e < n; e++) {
            ot[e] = __atomic_load_n(t + e, __ATOMIC_ACQUIRE);
            o[e] = atomic_load_f64(s + e);
        }
        Py_END_ALLOW_THREADS
    }
    PyBuffer_Release(&otags.view);
    PyBuffer_Release(&out.view);
    PyBuffer_Release(&tags.view);
    PyBuffer_Release(&src.view);
    Py_RETURN_NONE;

fail3:
    PyBuffer_Release(&out.view);
fail2:
    PyBuffer_Release(&tags.view);
fail1:
    PyBuffer_Release(&src.view);
    return NULL;
}

/* out[k] = tags[idx[k]], atomic loads. */
static PyObject *
py_gather_i64(PyObject *self, PyObject *args)
{
    PyObject *tags_o, *idx_o, *out_o;
    if (!PyArg_ParseTuple(args, "OOO", &tags_o, &idx_o, &out_o))
        return NULL;
    buf64 tags, idx, out;
    if (get_buf64(tags_o, &tags, 0, "tags") != 0)
        return NULL;
    if (get_buf64(idx_o, &idx, 0, "indices") != 0) {
        PyBuffer_Release(&tags.view);
        return NULL;
    }
    if (get_buf64(out_o, &out, 1, "out") != 0) {
        PyBuffer_Release(&idx.view);
        PyBuffer_Release(&tags.view);
        return NULL;
    }
    int ok = 1;
    if (idx.len != out.len) {
        PyErr_SetString(PyExc_ValueError, "indices/out length mismatch");
        ok = 0;
    }
    int64_t *t = (int64_t *)tags.view.buf;
    int64_t *ix = (int64_t *)idx.view.buf;
    int64_t *o = (int64_t *)out.view.buf;
    for (Py_ssize_t k = 0; ok && k < idx.len; k++) {
        if (ix[k] < 0 || ix[k] >= tags.len) {
            PyErr_Format(PyExc_IndexError, "tag index %lld out of range",
                         (long long)ix[k]);
            ok = 0;
            break;
        }
        o[k] = __atomic_load_n(t + ix[k], __ATOMIC_ACQUIRE);
    }
    PyBuffer_Release(&out.view);
    PyBuffer_Release(&idx.view);
    PyBuffer_Release(&tags.view);
    if (!ok)
        return NULL;
    Py_RETURN_NONE;
}

/* dst[start+e] += scale * delta[e] via per-element CAS, ascending e. */
static PyObject *
py_accum_cas_f64(PyObject *self, PyObject *args)
{
    PyObject *dst_o, *delta_o;
    Py_ssize_t start;
    double scale;
    if (!PyArg_ParseTuple(args, "OnOd", &dst_o, &start, &delta_o, &scale))
        return NULL;
    buf64 dst, delta;
    if (get_buf64(dst_o, &dst, 1, "dst") != 0)
        return NULL;
    if (get_buf64(delta_o, &delta, 0, "delta") != 0) {
        PyBuffer_Release(&dst.view);
        return NULL;
    }
    if (start < 0 || start + delta.len > dst.len) {
        PyBuffer_Release(&delta.view);
        PyBuffer_Release(&dst.view);
        PyErr_SetString(PyExc_IndexError, "update range out of bounds");
        return NULL;
    }
    uint64_t *d = (uint64_t *)dst.view.buf + start;
    double *dl = (double *)delta.view.buf;
    Py_ssize_t n = delta.len;
    Py_BEGIN_ALLOW_THREADS
    for (Py_ssize_t e = 0; e < n; e++)
        atomic_accum_f64(d + e, scale * dl[e]);
    Py_END_ALLOW_THREADS
    PyBuffer_Release(&delta.view);
    PyBuffer_Release(&dst.view);
    Py_RETURN_NONE;
}

/* Same as accum_cas_f64, stamping tags[start+e] = stamp after each element
 * write.  Value first, tag second: a concurrent tagged read can then only
 * under-report how fresh the value is. */
static PyObject *
py_accum_cas_tagged_f64(PyObject *self, PyObject *args)
{
    PyObject *dst_o, *tags_o, *delta_o;
    Py_ssize_t start;
    double scale;
    long long stamp;
    if (!PyArg_ParseTuple(args, "OOnOdL", &dst_o, &tags_o, &start, &delta_o,
                          &scale, &stamp))
        return NULL;
    buf64 dst, tags, delta;
    if (get_buf64(dst_o, &dst, 1, "dst") != 0)
        return NULL;
    if (get_buf64(tags_o, &tags, 1, "tags") != 0) {
        PyBuffer_Release(&dst.view);
        return NULL;
    }
    if (get_buf64(delta_o, &delta, 0, "delta") != 0) {
        PyBuffer_Release(&tags.view);
        PyBuffer_Release(&dst.view);
        return NULL;
    }
    if (tags.len != dst.len || start < 0 || start + delta.len > dst.len) {
        PyBuffer_Release(&delta.view);
        PyBuffer_Release(&tags.view);
        PyBuffer_Release(&dst.view);
        PyErr_SetString(PyExc_IndexError, "update range out of bounds");
        return NULL;
    }
    uint64_t *d = (uint64_t *)dst.view.buf + start;
    int64_t *t = (int64_t *)tags.view.buf + start;
    double *dl = (double *)delta.view.buf;
    Py_ssize_t n = delta.len;
    Py_BEGIN_ALLOW_THREADS
    for (Py_ssize_t e = 0; e < n; e++) {
        atomic_accum_f64(d + e, scale * dl[e]);
        __atomic_store_n(t + e, (int64_t)stamp, __ATOMIC_RELEASE);
    }
    Py_END_ALLOW_THREADS
    PyBuffer_Release(&delta.view);
    PyBuffer_Release(&tags.view);
    PyBuffer_Release(&dst.view);
    Py_RETURN_NONE;
}

static PyMethodDef methods[] = {
    {"load_f64", py_load_f64, METH_VARARGS, "Atomic load of one float64."},
    {"store_f64", py_store_f64, METH_VARARGS, "Atomic store of one float64."},
    {"load_i64", py_load_i64, METH_VARARGS, "Atomic load of one int64."},
    {"store_i64", py_store_i64, METH_VARARGS, "Atomic store of one int64."},
    {"fetch_add_i64", py_fetch_add_i64, METH_VARARGS,
     "Atomic fetch-and-add on one int64; returns the previous value."},
    {"snapshot_f64", py_snapshot_f64, METH_VARARGS,
     "Copy src into out with one atomic load per element, ascending."},
    {"snapshot_tagged_f64", py_snapshot_tagged_f64, METH_VARARGS,
     "Snapshot values and writer tags together, tag read before value."},
    {"gather_i64", py_gather_i64, METH_VARARGS,
     "Gather atomic loads of tags at the given indices."},
    {"accum_cas_f64", py_accum_cas_f64, METH_VARARGS,
     "dst[start+e] += scale*delta[e] via per-element CAS retry loops."},
    {"accum_cas_tagged_f64", py_accum_cas_tagged_f64, METH_VARARGS,
     "CAS accumulate plus writer-tag stamping per element."},
    {NULL, NULL, 0, NULL},
};

static struct PyModuleDef moduledef = {
    PyModuleDef_HEAD_INIT, "_atomics",
    "Lock-free 64-bit atomic primitives for shared parameter buffers.",
    -1, methods,
};

PyMODINIT_FUNC
PyInit__atomics(void)
{
    return PyModule_Create(&moduledef);
}
