"""Process isolation substrate.

Spokes run as separate OS processes. The policy applied inside the child
before any app or backend code runs:

  * setrlimit: CPU seconds, virtual memory, created-file size;
  * a seccomp deny list (via libseccomp when present): no inet/inet6
    sockets (all egress must use the hub's proxy over AF_UNIX), no ptrace,
    no cross-process memory reads/writes;
  * a filesystem view reduced to the spoke's private directory plus
    read-only interpreter paths, enforced by an audit-hook guard.

Landlock/chroot-grade confinement is not available everywhere; when only
the audit-hook guard backs the filesystem view the launch report marks the
run "reduced" and the hub records that in the audit log. Every error path
fails closed: a spoke that cannot be confined is never started.
"""

from __future__ import annotations

import ctypes
import errno as errno_mod
import json
import os
import socket
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .channel import Channel, channel_pair
from .config import RuntimeConfig
from .errors import InvalidHost, LaunchFailure
from .suffixes import bundled_list, etld_plus_one

ALLOWED_SYSTEM_INTERFACES = (
    "exit",
    "return-from-signal",
    "read/write on granted descriptors",
    "unix-socket connect to the hub proxy",
)


class SandboxViolation(PermissionError):
    """A denied interface was touched; the spoke runtime dies on this."""


@dataclass
class SandboxPolicy:
    cpu_seconds: int = 60
    max_virtual_memory_bytes: int = 512 * 1024 * 1024
    max_created_file_bytes: int = 16 * 1024 * 1024
    enable_seccomp: bool = True
    filesystem_view: str = ""  # spoke-private directory
    allowed_system_interfaces: tuple[str, ...] = ALLOWED_SYSTEM_INTERFACES

    @classmethod
    def from_config(cls, cfg: RuntimeConfig, private_dir: str) -> "SandboxPolicy":
        return cls(
            cpu_seconds=cfg.cpu_seconds,
            max_virtual_memory_bytes=cfg.max_virtual_memory_bytes,
            max_created_file_bytes=cfg.max_created_file_bytes,
            enable_seccomp=cfg.enable_seccomp,
            filesystem_view=private_dir,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "cpu_seconds": self.cpu_seconds,
                "max_virtual_memory_bytes": self.max_virtual_memory_bytes,
                "max_created_file_bytes": self.max_created_file_bytes,
                "enable_seccomp": self.enable_seccomp,
                "filesystem_view": self.filesystem_view,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SandboxPolicy":
        return cls(**json.loads(text))


@dataclass
class NetworkPolicy:
    root_domain: str
    suffix_list_version: str = ""
    egress_log: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.suffix_list_version:
            self.suffix_list_version = bundled_list().version


def guard_egress(host: str, policy: NetworkPolicy, has_egress_grant) -> str:
    """'allow' | 'block', per eTLD+1 match AND a covering egress permission.

    has_egress_grant(domain) is consulted only after the domain matches; any
    resolution failure blocks.
    """
    try:
        domain = etld_plus_one(host)
    except InvalidHost:
        policy.egress_log.append((host, "block:invalid-host"))
        return "block"
    if domain != policy.root_domain:
        policy.egress_log.append((host, "block:off-domain"))
        return "block"
    if not has_egress_grant(domain):
        policy.egress_log.append((host, "block:no-grant"))
        return "block"
    policy.egress_log.append((host, "allow"))
    return "allow"


# -- child-side policy application (runs inside the spoke process) -----------

_SCMP_ACT_ALLOW = 0x7FFF0000
_SCMP_ACT_ERRNO = 0x00050000
_SCMP_CMP_NE = 1
_AF_UNIX = 1


class _ScmpArgCmp(ctypes.Structure):
    _fields_ = [
        ("arg", ctypes.c_uint),
        ("op", ctypes.c_int),
        ("datum_a", ctypes.c_uint64),
        ("datum_b", ctypes.c_uint64),
    ]


def apply_rlimits(policy: SandboxPolicy) -> dict:
    import resource

    resource.setrlimit(resource.RLIMIT_CPU, (policy.cpu_seconds, policy.cpu_seconds))
    resource.setrlimit(
        resource.RLIMIT_AS,
        (policy.max_virtual_memory_bytes, policy.max_virtual_memory_bytes),
    )
    resource.setrlimit(
        resource.RLIMIT_FSIZE,
        (policy.max_created_file_bytes, policy.max_created_file_bytes),
    )
    return {
        "cpu_seconds": policy.cpu_seconds,
        "max_virtual_memory_bytes": policy.max_virtual_memory_bytes,
        "max_created_file_bytes": policy.max_created_file_bytes,
    }


def apply_seccomp_denylist() -> bool:
    """Install the system-interface deny list; False if libseccomp is absent."""
    try:
        lib = ctypes.CDLL("libseccomp.so.2", use_errno=True)
    except OSError:
        return False
    lib.seccomp_init.restype = ctypes.c_void_p
    lib.seccomp_rule_add_array.argtypes = [
        ctypes.c_void_p,
        ctypes.c_uint32,
        ctypes.c_int,
        ctypes.c_uint,
        ctypes.POINTER(_ScmpArgCmp),
    ]
    lib.seccomp_load.argtypes = [ctypes.c_void_p]
    lib.seccomp_release.argtypes = [ctypes.c_void_p]
    lib.seccomp_syscall_resolve_name.argtypes = [ctypes.c_char_p]

    ctx = lib.seccomp_init(_SCMP_ACT_ALLOW)
    if not ctx:
        return False
    eperm = _SCMP_ACT_ERRNO | errno_mod.EPERM
    # inet sockets are denied outright: egress exists only via the hub proxy
    sc_socket = lib.seccomp_syscall_resolve_name(b"socket")
    cmp_not_unix = (_ScmpArgCmp * 1)(_ScmpArgCmp(0, _SCMP_CMP_NE, _AF_UNIX, 0))
    lib.seccomp_rule_add_array(ctx, eperm, sc_socket, 1, cmp_not_unix)
    for name in (b"ptrace", b"process_vm_readv", b"process_vm_writev"):
        sc = lib.seccomp_syscall_resolve_name(name)
        if sc >= 0:
            lib.seccomp_rule_add_array(ctx, eperm, sc, 0, None)
    rc = lib.seccomp_load(ctx)
    lib.seccomp_release(ctx)
    return rc == 0


def install_fs_guard(private_dir: str) -> None:
    """Deny-by-default filesystem view via a raising audit hook.

    Writable: the spoke's private directory. Read-only: the interpreter and
    installed packages (imports keep working). Everything else is denied.
    """
    import hubspoke

    package_root = str(Path(hubspoke.__file__).resolve().parent.parent)
    private = str(Path(private_dir).resolve())
    read_prefixes = tuple(
        str(Path(p).resolve())
        for p in {sys.base_prefix, sys.exec_prefix, sys.prefix, package_root}
    ) + ("/proc/self", f"/proc/{os.getpid()}", "/dev/null", "/dev/urandom",
         "/etc/localtime")
    write_events = {"os.remove", "os.rename", "os.mkdir", "os.rmdir"}
    list_events = {"os.listdir", "os.scandir"}

    def _path_of(arg) -> str | None:
        if isinstance(arg, int):
            return None  # already-open descriptor
        if isinstance(arg, bytes):
            try:
                arg = arg.decode()
            except UnicodeDecodeError:
                return "\x00undecodable"
        if isinstance(arg, os.PathLike):
            arg = os.fspath(arg)
        if not isinstance(arg, str):
            return None
        return os.path.realpath(arg)

    def hook(event: str, args: tuple) -> None:
        if event == "open":
            path, mode, flags = _path_of(args[0]), args[1], args[2]
            if path is None:
                return
            if path.startswith(private):
                return
            if mode is None:
                writing = bool(flags & (os.O_WRONLY | os.O_RDWR | os.O_CREAT
                                        | os.O_TRUNC | os.O_APPEND))
            else:
                writing = any(c in mode for c in "wax+")
            if not writing and path.startswith(read_prefixes):
                return
            raise SandboxViolation(f"sandbox: open {path!r} denied")
        elif event in write_events:
            path = _path_of(args[0])
            if path is not None and not path.startswith(private):
                raise SandboxViolation(f"sandbox: {event} {path!r} denied")
        elif event in list_events:
            path = _path_of(args[0]) if args else None
            if path is None:
                return
            if not (path.startswith(private) or path.startswith(read_prefixes)):
                raise SandboxViolation(f"sandbox: {event} {path!r} denied")

    sys.addaudithook(hook)


def audit_descriptors(channel_fd: int) -> dict:
    """Count sockets among open fds; flag any listener. Run post-policy."""
    sockets = 0
    listening = 0
    for name in os.listdir("/proc/self/fd"):
        fd = int(name)
        try:
            mode = os.fstat(fd).st_mode
        except OSError:
            continue
        import stat as stat_mod

        if stat_mod.S_ISSOCK(mode):
            sockets += 1
            try:
                s = socket.socket(fileno=os.dup(fd))
                if s.getsockopt(socket.SOL_SOCKET, socket.SO_ACCEPTCONN):
                    listening += 1
                s.close()
            except OSError:
                pass
    return {"sockets": sockets, "listening": listening, "channel_fd": channel_fd}


# -- launcher (hub side) ------------------------------------------------------


@dataclass
class SpokeProcess:
    proc: subprocess.Popen
    channel: Channel
    report: dict
    private_dir: Path

    def alive(self) -> bool:
        return self.proc.poll() is None

    def terminate(self) -> None:
        self.channel.close()
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


def launch_isolated(policy: SandboxPolicy, private_dir: str | Path,
                    proxy_path: str = "", launch_timeout: float = 30.0) -> SpokeProcess:
    """Start a confined spoke process and verify its sandbox report.

    Raises LaunchFailure (and reaps the child) if the policy could not be
    applied; there is no unconfined fallback.
    """
    private_dir = Path(private_dir)
    private_dir.mkdir(parents=True, exist_ok=True)
    hub_channel, child_sock = channel_pair()
    stdout = (private_dir / "stdout.log").open("ab")
    stderr = (private_dir / "stderr.log").open("ab")
    try:
        proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "hubspoke.spoke_main",
                "--channel-fd",
                str(child_sock.fileno()),
                "--private-dir",
                str(private_dir),
                "--policy",
                policy.to_json(),
                "--proxy",
                proxy_path,
            ],
            pass_fds=(child_sock.fileno(),),
            stdin=subprocess.DEVNULL,
            stdout=stdout,
            stderr=stderr,
            close_fds=True,
        )
    except OSError as exc:
        hub_channel.close()
        raise LaunchFailure(str(exc))
    finally:
        stdout.close()
        stderr.close()
        child_sock.close()

    try:
        report = hub_channel.recv_json(timeout=launch_timeout)
    except Exception as exc:
        hub_channel.close()
        proc.kill()
        proc.wait()
        raise LaunchFailure(f"no sandbox report: {exc}")
    if report.get("kind") != "sandbox_report" or not report.get("ok"):
        hub_channel.close()
        proc.kill()
        proc.wait()
        raise LaunchFailure(f"sandbox rejected: {report}")
    return SpokeProcess(proc=proc, channel=hub_channel, report=report,
                        private_dir=private_dir)


# -- egress forward proxy (hub side) ------------------------------------------


class EgressProxy:
    """Per-spoke AF_UNIX forward proxy; the spoke knows only the socket path.

    Protocol: client sends one JSON line {"host": h, "port": p}; proxy
    answers {"decision": "allow"|"block", "reason": code} and, on allow,
    tunnels bytes to the destination.
    """

    def __init__(self, socket_dir: str | Path, app_id: str, policy: NetworkPolicy,
                 has_egress_grant):
        self.app_id = app_id
        self.policy = policy
        self._has_grant = has_egress_grant
        Path(socket_dir).mkdir(parents=True, exist_ok=True)
        self.path = str(Path(socket_dir) / f"proxy-{app_id}.sock")
        if os.path.exists(self.path):
            os.unlink(self.path)
        self._server = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._server.bind(self.path)
        self._server.listen(8)
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._closing = False
        self._thread.start()

    def _serve(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            threading.Thread(target=self._handle, args=(conn,), daemon=True).start()

    def _handle(self, conn: socket.socket) -> None:
        try:
            line = b""
            while not line.endswith(b"\n"):
                chunk = conn.recv(4096)
                if not chunk:
                    return
                line += chunk
            req = json.loads(line)
            host, port = req.get("host", ""), int(req.get("port", 443))
            decision = guard_egress(host, self.policy, self._has_grant)
            reason = self.policy.egress_log[-1][1]
            conn.sendall(json.dumps({"decision": decision, "reason": reason}).encode() + b"\n")
            if decision == "allow":
                self._tunnel(conn, host, port)
        except (OSError, ValueError):
            pass
        finally:
            conn.close()

    def _tunnel(self, conn: socket.socket, host: str, port: int) -> None:
        try:
            remote = socket.create_connection((host, port), timeout=30)
        except OSError:
            return
        def pump(src, dst):
            try:
                while True:
                    data = src.recv(65536)
                    if not data:
                        break
                    dst.sendall(data)
            except OSError:
                pass
            finally:
                try:
                    dst.shutdown(socket.SHUT_WR)
                except OSError:
                    pass
        t = threading.Thread(target=pump, args=(remote, conn), daemon=True)
        t.start()
        pump(conn, remote)
        remote.close()

    def close(self) -> None:
        self._closing = True
        try:
            self._server.close()
        finally:
            if os.path.exists(self.path):
                os.unlink(self.path)


def proxy_request(proxy_path: str, host: str, port: int = 443) -> dict:
    """Spoke-side helper: ask the proxy for a connection decision."""
    s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    try:
        s.connect(proxy_path)
        s.sendall(json.dumps({"host": host, "port": port}).encode() + b"\n")
        line = b""
        while not line.endswith(b"\n"):
            chunk = s.recv(4096)
            if not chunk:
                break
            line += chunk
        return json.loads(line or b"{}")
    finally:
        s.close()
