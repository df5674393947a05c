"""Test-runner shims written into each validation workspace.

A shim loads the patch, calls the entry point once per testcase and reports
on its standard output using the result-line protocol::

    START <i>            before test i
    OK <i>               the call returned
    VAL <i> <literal>    the returned value, canonical literal syntax
    ERR <i> <message>    uncaught error (i = 0: patch failed to load)
    DONE                 every test ran

Anything the patch itself prints goes to standard error.
"""

PYTHON_SHIM = r'''
import json
import math
import os
import sys
import types

if hasattr(sys, "set_int_max_str_digits"):
    sys.set_int_max_str_digits(0)

_PROTO = os.fdopen(os.dup(1), "w", encoding="utf-8")
os.dup2(2, 1)
sys.stdout = sys.stderr


def emit(line):
    _PROTO.write(line + "\n")
    _PROTO.flush()


def split_arrow(line):
    in_string = escaped = False
    for i, ch in enumerate(line):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif line.startswith("->", i):
            return line[:i]
    raise ValueError("missing '->' in " + repr(line))


def load_inputs(path):
    cases = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cases.append(json.loads("[" + split_arrow(line) + "]"))
    return cases


def fmt(v):
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, int):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return repr(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple, range, types.GeneratorType)) or hasattr(v, "__next__"):
        return "[" + ", ".join(fmt(x) for x in v) + "]"
    raise TypeError("cannot represent a return value of type " + type(v).__name__)


def describe(exc):
    text = type(exc).__name__
    msg = str(exc)
    if msg:
        text += ": " + msg
    return " ".join(text.split())[:500]


def main():
    patch_path, tests_path, entry = sys.argv[1:4]
    cases = load_inputs(tests_path)
    try:
        with open(patch_path, encoding="utf-8") as fh:
            source = fh.read()
        namespace = {"__name__": "patch", "__file__": patch_path}
        exec(compile(source, os.path.basename(patch_path), "exec"), namespace)
        if entry not in namespace:
            raise NameError("function " + repr(entry) + " is not defined")
        fn = namespace[entry]
        if not callable(fn):
            raise TypeError(repr(entry) + " is not callable")
    except BaseException as exc:
        emit("ERR 0 " + describe(exc))
        return
    for i, args in enumerate(cases, 1):
        emit("START %d" % i)
        try:
            text = fmt(fn(*args))
        except BaseException as exc:
            emit("ERR %d %s" % (i, describe(exc)))
            return
        emit("OK %d" % i)
        emit("VAL %d %s" % (i, text))
    emit("DONE")


main()
'''


JAVA_SHIM = r'''
import java.io.*;
import java.lang.reflect.*;
import java.nio.charset.StandardCharsets;
import java.nio.file.*;
import java.util.*;

public class ConvloopRunner {
    static PrintStream proto;

    static void emit(String line) {
        proto.println(line);
        proto.flush();
    }

    // ---- literal parsing -------------------------------------------------
    static final class Parser {
        final String s;
        int i;
        Parser(String s) { this.s = s; }

        void ws() { while (i < s.length() && Character.isWhitespace(s.charAt(i))) i++; }

        Object value() {
            ws();
            if (i >= s.length()) throw new IllegalArgumentException("unexpected end of literal");
            char c = s.charAt(i);
            if (c == '[') {
                i++;
                ArrayList<Object> out = new ArrayList<>();
                ws();
                if (s.charAt(i) == ']') { i++; return out; }
                while (true) {
                    out.add(value());
                    ws();
                    char d = s.charAt(i++);
                    if (d == ']') return out;
                    if (d != ',') throw new IllegalArgumentException("expected ',' at " + i);
                }
            }
            if (c == '"') return string();
            if (s.startsWith("true", i)) { i += 4; return Boolean.TRUE; }
            if (s.startsWith("false", i)) { i += 5; return Boolean.FALSE; }
            if (s.startsWith("null", i)) { i += 4; return null; }
            int start = i;
            while (i < s.length() && "+-0123456789.eE".indexOf(s.charAt(i)) >= 0) i++;
            String num = s.substring(start, i);
            if (num.isEmpty()) throw new IllegalArgumentException("bad literal at " + start);
            if (num.contains(".") || num.contains("e") || num.contains("E")) return Double.valueOf(num);
            long v = Long.parseLong(num);
            if (v >= Integer.MIN_VALUE && v <= Integer.MAX_VALUE) return Integer.valueOf((int) v);
            return Long.valueOf(v);
        }

        String string() {
            StringBuilder sb = new StringBuilder();
            i++;
            while (true) {
                char c = s.charAt(i++);
                if (c == '"') return sb.toString();
                if (c != '\\') { sb.append(c); continue; }
                char e = s.charAt(i++);
                switch (e) {
                    case 'n': sb.append('\n'); break;
                    case 't': sb.append('\t'); break;
                    case 'r': sb.append('\r'); break;
                    case 'b': sb.append('\b'); break;
                    case 'f': sb.append('\f'); break;
                    case 'u': sb.append((char) Integer.parseInt(s.substring(i, i + 4), 16)); i += 4; break;
                    default: sb.append(e);
                }
            }
        }
    }

    static String inputsPart(String line) {
        boolean inString = false, escaped = false;
        for (int i = 0; i < line.length(); i++) {
            char ch = line.charAt(i);
            if (inString) {
                if (escaped) escaped = false;
                else if (ch == '\\') escaped = true;
                else if (ch == '"') inString = false;
            } else if (ch == '"') {
                inString = true;
            } else if (line.startsWith("->", i)) {
                return line.substring(0, i);
            }
        }
        throw new IllegalArgumentException("missing '->'");
    }

    // ---- argument coercion ----------------------------------------------
    static Object coerce(Object v, Class<?> t) {
        if (v == null) return null;
        if (t == int.class || t == Integer.class) return ((Number) v).intValue();
        if (t == long.class || t == Long.class) return ((Number) v).longValue();
        if (t == double.class || t == Double.class) return ((Number) v).doubleValue();
        if (t == float.class || t == Float.class) return ((Number) v).floatValue();
        if (t == char.class || t == Character.class) return ((String) v).charAt(0);
        if (t.isArray() && v instanceof List) {
            List<?> list = (List<?>) v;
            Class<?> ct = t.getComponentType();
            Object arr = Array.newInstance(ct, list.size());
            for (int k = 0; k < list.size(); k++) Array.set(arr, k, coerce(list.get(k), ct));
            return arr;
        }
        return v;
    }

    // ---- value formatting ---------------------------------------------------
    static String fmt(Object v) {
        if (v == null) return "null";
        if (v instanceof Boolean) return v.toString();
        if (v instanceof Integer || v instanceof Long || v instanceof Short || v instanceof Byte
                || v instanceof java.math.BigInteger) return v.toString();
        if (v instanceof Double || v instanceof Float) {
            double d = ((Number) v).doubleValue();
            if (Double.isNaN(d)) return "NaN";
            if (Double.isInfinite(d)) return d > 0 ? "Infinity" : "-Infinity";
            return Double.toString(d);
        }
        if (v instanceof Character || v instanceof String) return quote(v.toString());
        if (v instanceof Iterable) {
            StringJoiner j = new StringJoiner(", ", "[", "]");
            for (Object x : (Iterable<?>) v) j.add(fmt(x));
            return j.toString();
        }
        if (v.getClass().isArray()) {
            StringJoiner j = new StringJoiner(", ", "[", "]");
            for (int k = 0; k < Array.getLength(v); k++) j.add(fmt(Array.get(v, k)));
            return j.toString();
        }
        throw new IllegalArgumentException("cannot represent a return value of type " + v.getClass().getName());
    }

    static String quote(String s) {
        StringBuilder sb = new StringBuilder("\"");
        for (char c : s.toCharArray()) {
            if (c == '"' || c == '\\') sb.append('\\').append(c);
            else if (c == '\n') sb.append("\\n");
            else if (c == '\t') sb.append("\\t");
            else if (c == '\r') sb.append("\\r");
            else if (c < 0x20 || c > 0x7e) sb.append(String.format("\\u%04x", (int) c));
            else sb.append(c);
        }
        return sb.append('"').toString();
    }

    static String describe(Throwable t) {
        if (t instanceof InvocationTargetException && t.getCause() != null) t = t.getCause();
        String msg = t.getMessage();
        String text = t.getClass().getSimpleName() + (msg == null ? "" : ": " + msg);
        text = text.replaceAll("\\s+", " ").trim();
        return text.length() > 500 ? text.substring(0, 500) : text;
    }

    public static void main(String[] args) throws Exception {
        proto = new PrintStream(new FileOutputStream(FileDescriptor.out), true, "UTF-8");
        System.setOut(System.err);
        String className = args[0], tests = args[1], entry = args[2];
        List<List<Object>> cases = new ArrayList<>();
        for (String raw : Files.readAllLines(Paths.get(tests), StandardCharsets.UTF_8)) {
            String line = raw.trim();
            if (line.isEmpty() || line.startsWith("#")) continue;
            @SuppressWarnings("unchecked")
            List<Object> argsList = (List<Object>) new Parser("[" + inputsPart(line) + "]").value();
            cases.add(argsList);
        }
        int arity = cases.isEmpty() ? 0 : cases.get(0).size();
        Method method = null;
        Object target = null;
        try {
            Class<?> cls = Class.forName(className);
            for (Method m : cls.getDeclaredMethods()) {
                if (m.getName().equals(entry) && m.getParameterCount() == arity) { method = m; break; }
            }
            if (method == null) throw new NoSuchMethodException("function '" + entry + "' is not defined");
            method.setAccessible(true);
            if (!Modifier.isStatic(method.getModifiers())) {
                Constructor<?> ctor = cls.getDeclaredConstructor();
                ctor.setAccessible(true);
                target = ctor.newInstance();
            }
        } catch (Throwable t) {
            emit("ERR 0 " + describe(t));
            return;
        }
        Class<?>[] types = method.getParameterTypes();
        for (int i = 1; i <= cases.size(); i++) {
            emit("START " + i);
            String text;
            try {
                List<Object> a = cases.get(i - 1);
                Object[] call = new Object[a.size()];
                for (int k = 0; k < call.length; k++) call[k] = coerce(a.get(k), types[k]);
                text = fmt(method.invoke(target, call));
            } catch (Throwable t) {
                emit("ERR " + i + " " + describe(t));
                return;
            }
            emit("OK " + i);
            emit("VAL " + i + " " + text);
        }
        emit("DONE");
    }
}
'''
