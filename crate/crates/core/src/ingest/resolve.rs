use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, ToSocketAddrs};

use crate::store::validate_host_name;

/// Name/address lookup used to complete host records.
pub trait Resolver: Send + Sync {
    fn forward(&self, name: &str) -> Option<Ipv4Addr>;
    fn reverse(&self, ip: Ipv4Addr) -> Option<String>;
}

/// Resolves nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoResolver;

impl Resolver for NoResolver {
    fn forward(&self, _: &str) -> Option<Ipv4Addr> {
        None
    }

    fn reverse(&self, _: Ipv4Addr) -> Option<String> {
        None
    }
}

/// Fixed name/address table, usable as a hosts file or a test stub.
#[derive(Debug, Default, Clone)]
pub struct StaticResolver {
    by_name: HashMap<String, Ipv4Addr>,
    by_ip: HashMap<Ipv4Addr, String>,
}

impl StaticResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, ip: Ipv4Addr) {
        let name = name.to_ascii_lowercase();
        self.by_ip.entry(ip).or_insert_with(|| name.clone());
        self.by_name.insert(name, ip);
    }
}

impl FromIterator<(String, Ipv4Addr)> for StaticResolver {
    fn from_iter<T: IntoIterator<Item = (String, Ipv4Addr)>>(iter: T) -> Self {
        let mut r = Self::new();
        for (name, ip) in iter {
            r.insert(&name, ip);
        }
        r
    }
}

impl Resolver for StaticResolver {
    fn forward(&self, name: &str) -> Option<Ipv4Addr> {
        self.by_name.get(&name.to_ascii_lowercase()).copied()
    }

    fn reverse(&self, ip: Ipv4Addr) -> Option<String> {
        self.by_ip.get(&ip).cloned()
    }
}

/// Forward lookups through the system resolver. Reverse lookups are not
/// available from the standard library and always miss.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemResolver;

impl Resolver for SystemResolver {
    fn forward(&self, name: &str) -> Option<Ipv4Addr> {
        (name, 0).to_socket_addrs().ok()?.find_map(|a| match a.ip() {
            IpAddr::V4(v4) => Some(v4),
            IpAddr::V6(_) => None,
        })
    }

    fn reverse(&self, _: Ipv4Addr) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedHost {
    pub name: String,
    pub ip: Option<Ipv4Addr>,
}

/// Completes a host identity. An IP literal is reverse-resolved for its name,
/// falling back to the literal itself (also when the reverse name would not
/// be a storable host name). A name is forward-resolved for its address,
/// leaving it empty on failure.
pub fn resolve_host(name_or_ip: &str, resolver: &dyn Resolver) -> ResolvedHost {
    let input = name_or_ip.trim();
    match input.parse::<Ipv4Addr>() {
        Ok(ip) => {
            let name = resolver
                .reverse(ip)
                .map(|n| n.trim_end_matches('.').to_string())
                .filter(|n| validate_host_name(n).is_ok())
                .unwrap_or_else(|| ip.to_string());
            ResolvedHost { name, ip: Some(ip) }
        }
        Err(_) => ResolvedHost {
            name: input.to_string(),
            ip: resolver.forward(input),
        },
    }
}
