use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::wire::{read_frame, write_frame};
use crate::{Pool, PoolError};

/// A running server. Dropping the handle leaves it running; call
/// [`ServerHandle::shutdown`] to stop accepting and join the accept loop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

/// Binds `addr` and serves `pool` with one thread per connection.
pub fn serve(pool: Arc<Pool>, addr: &str) -> Result<ServerHandle, PoolError> {
    let bind_err = |e: std::io::Error| PoolError::BindFailure { addr: addr.to_string(), reason: e.to_string() };
    let listener = TcpListener::bind(addr).map_err(bind_err)?;
    let local = listener.local_addr().map_err(bind_err)?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let accept = thread::Builder::new()
        .name("mgk-pool-accept".into())
        .spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let pool = Arc::clone(&pool);
                let _ = thread::Builder::new().name("mgk-pool-conn".into()).spawn(move || connection(&pool, stream));
            }
        })
        .map_err(|e| PoolError::Internal(e.to_string()))?;
    Ok(ServerHandle { addr: local, stop, accept: Some(accept) })
}

fn connection(pool: &Pool, stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let Ok(write_half) = stream.try_clone() else { return };
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::new(write_half);
    while let Ok(Some(body)) = read_frame(&mut reader) {
        let resp = pool.handle_bytes(&body);
        let bytes = serde_json::to_vec(&resp).expect("responses serialize");
        if write_frame(&mut writer, &bytes).is_err() {
            return;
        }
    }
}
